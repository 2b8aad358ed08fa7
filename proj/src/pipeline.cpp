#include "fairgrain/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace fairgrain {

// ---------------------------------------------------------------------------
// small CSV helpers

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

static std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += "\"\"";
    else out += ch;
  }
  out += "\"";
  return out;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// manifest

int DatasetManifest::label_index(const std::string& target) const {
  auto it = std::lower_bound(class_vocabulary.begin(), class_vocabulary.end(), target);
  if (it == class_vocabulary.end() || *it != target)
    throw ValidationError("label '" + target + "' not in class vocabulary");
  return static_cast<int>(it - class_vocabulary.begin());
}

std::vector<int> DatasetManifest::split_indices(const std::string& split) const {
  std::vector<int> out;
  for (size_t i = 0; i < rows.size(); ++i)
    if (rows[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();

  std::string line;
  if (!std::getline(in, line)) throw ValidationError("manifest is empty: " + path);
  auto header = split_csv_line(line);
  std::vector<std::string> errors;
  if (header.size() < 3 || header.front() != "path" || header[1] != "target" ||
      header.back() != "split")
    throw ValidationError("manifest header must be 'path,target,<protected...>,split', got '" +
                          line + "'");

  DatasetManifest manifest;
  manifest.protected_names.assign(header.begin() + 2, header.end() - 1);

  std::set<std::string> targets;
  std::vector<std::set<std::string>> protected_values(manifest.protected_names.size());
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      errors.push_back("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " columns, got " +
                       std::to_string(fields.size()));
      continue;
    }
    ManifestRow row;
    row.path = (base / fields[0]).string();
    row.target = fields[1];
    row.protected_values.assign(fields.begin() + 2, fields.end() - 1);
    row.split = fields.back();
    if (!fs::exists(row.path))
      errors.push_back("line " + std::to_string(line_no) + ": unresolvable path '" +
                       fields[0] + "'");
    if (row.split != "train" && row.split != "val" && row.split != "test")
      errors.push_back("line " + std::to_string(line_no) + ": unknown split '" + row.split +
                       "'");
    targets.insert(row.target);
    for (size_t k = 0; k < row.protected_values.size(); ++k)
      protected_values[k].insert(row.protected_values[k]);
    manifest.rows.push_back(std::move(row));
  }
  if (manifest.rows.empty()) errors.push_back("manifest has no data rows");
  if (!errors.empty()) {
    std::string msg = "manifest validation failed (" + std::to_string(errors.size()) +
                      " problems):";
    for (size_t i = 0; i < errors.size() && i < 20; ++i) msg += "\n  - " + errors[i];
    if (errors.size() > 20) msg += "\n  - ...";
    throw ValidationError(msg);
  }
  manifest.class_vocabulary.assign(targets.begin(), targets.end());
  for (auto& s : protected_values)
    manifest.protected_vocabularies.emplace_back(s.begin(), s.end());
  return manifest;
}

// ---------------------------------------------------------------------------
// run config

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + s + "' as a number");
  }
}

long parse_int(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': cannot parse '" + s + "' as an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "': cannot parse '" + s + "' as a bool");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& s, Parse parse) {
  std::vector<T> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(parse(key, cur));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>)
      out += format_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "backbone",        "stage_widths",    "convs_per_stage", "expert_stages",
      "descriptor_len",  "input_resolution", "mask_threshold", "pooling",
      "softmax_fusion",  "channel_mean",    "channel_std",     "learning_rate",
      "momentum",        "weight_decay",    "batch_size",      "epochs",
      "patience",        "seed",            "pool_per_image",  "pool_includes_self",
      "plain_baseline",  "dob_std",         "heatmap_alpha",   "manifest",
      "output_dir",      "pretrained_checkpoint"};
  return k;
}

void RunConfig::set_key(const std::string& key, const std::string& value) {
  if (key == "backbone") backbone = value;
  else if (key == "stage_widths")
    stage_widths = parse_list<int>(key, value, [](const std::string& k, const std::string& s) {
      return static_cast<int>(parse_int(k, s));
    });
  else if (key == "convs_per_stage") convs_per_stage = static_cast<int>(parse_int(key, value));
  else if (key == "expert_stages")
    expert_stages = parse_list<int>(key, value, [](const std::string& k, const std::string& s) {
      return static_cast<int>(parse_int(k, s));
    });
  else if (key == "descriptor_len") descriptor_len = static_cast<int>(parse_int(key, value));
  else if (key == "input_resolution")
    input_resolution = static_cast<int>(parse_int(key, value));
  else if (key == "mask_threshold") mask_threshold = parse_double(key, value);
  else if (key == "pooling") pooling = value;
  else if (key == "softmax_fusion") softmax_fusion = parse_bool(key, value);
  else if (key == "channel_mean")
    channel_mean = parse_list<double>(key, value, parse_double);
  else if (key == "channel_std")
    channel_std = parse_list<double>(key, value, parse_double);
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "momentum") momentum = parse_double(key, value);
  else if (key == "weight_decay") weight_decay = parse_double(key, value);
  else if (key == "batch_size") batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "epochs") epochs = static_cast<int>(parse_int(key, value));
  else if (key == "patience") patience = static_cast<int>(parse_int(key, value));
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "pool_per_image") pool_per_image = parse_bool(key, value);
  else if (key == "pool_includes_self") pool_includes_self = parse_bool(key, value);
  else if (key == "plain_baseline") plain_baseline = parse_bool(key, value);
  else if (key == "dob_std") dob_std = value;
  else if (key == "heatmap_alpha") heatmap_alpha = parse_double(key, value);
  else if (key == "manifest") manifest = value;
  else if (key == "output_dir") output_dir = value;
  else if (key == "pretrained_checkpoint") pretrained_checkpoint = value;
  else
    throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::get_key(const std::string& key) const {
  if (key == "backbone") return backbone;
  if (key == "stage_widths") return join_list(stage_widths);
  if (key == "convs_per_stage") return std::to_string(convs_per_stage);
  if (key == "expert_stages") return join_list(expert_stages);
  if (key == "descriptor_len") return std::to_string(descriptor_len);
  if (key == "input_resolution") return std::to_string(input_resolution);
  if (key == "mask_threshold") return format_double(mask_threshold);
  if (key == "pooling") return pooling;
  if (key == "softmax_fusion") return softmax_fusion ? "true" : "false";
  if (key == "channel_mean") return join_list(channel_mean);
  if (key == "channel_std") return join_list(channel_std);
  if (key == "learning_rate") return format_double(learning_rate);
  if (key == "momentum") return format_double(momentum);
  if (key == "weight_decay") return format_double(weight_decay);
  if (key == "batch_size") return std::to_string(batch_size);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "patience") return std::to_string(patience);
  if (key == "seed") return std::to_string(seed);
  if (key == "pool_per_image") return pool_per_image ? "true" : "false";
  if (key == "pool_includes_self") return pool_includes_self ? "true" : "false";
  if (key == "plain_baseline") return plain_baseline ? "true" : "false";
  if (key == "dob_std") return dob_std;
  if (key == "heatmap_alpha") return format_double(heatmap_alpha);
  if (key == "manifest") return manifest;
  if (key == "output_dir") return output_dir;
  if (key == "pretrained_checkpoint") return pretrained_checkpoint;
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    cfg.set_key(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& key : keys()) out += key + "=" + get_key(key) + "\n";
  return out;
}

ModelConfig RunConfig::model_config(int num_classes) const {
  if (backbone != "staged")
    throw ConfigError("unsupported backbone '" + backbone + "' (available: staged)");
  ModelConfig mc;
  mc.backbone.in_channels = 3;
  mc.backbone.input_resolution = input_resolution;
  mc.backbone.stage_widths = stage_widths;
  mc.backbone.convs_per_stage = convs_per_stage;
  mc.expert_stages = expert_stages;
  mc.descriptor_len = descriptor_len;
  mc.num_classes = num_classes;
  mc.mask_threshold = mask_threshold;
  if (pooling == "gmp") mc.pool = nn::PoolKind::GlobalMax;
  else if (pooling == "gap") mc.pool = nn::PoolKind::GlobalAvg;
  else throw ConfigError("unknown pooling '" + pooling + "' (gmp or gap)");
  return mc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.learning_rate = learning_rate;
  tc.momentum = momentum;
  tc.weight_decay = weight_decay;
  tc.batch_size = batch_size;
  tc.epochs = epochs;
  tc.patience = patience;
  tc.seed = seed;
  tc.pool_per_image = pool_per_image;
  tc.pool_includes_self = pool_includes_self;
  tc.plain_baseline = plain_baseline;
  return tc;
}

std::string resolve_output_dir(const RunConfig& cfg) {
  const char* root = std::getenv("FAIRGRAIN_OUTPUT_ROOT");
  fs::path out(cfg.output_dir);
  if (root && *root && out.is_relative()) out = fs::path(root) / out;
  return out.string();
}

TrainingSet load_training_set(const DatasetManifest& manifest, const std::string& split,
                              const RunConfig& cfg) {
  TrainingSet set;
  set.height = set.width = cfg.input_resolution;
  set.channels = 3;
  set.channel_mean = cfg.channel_mean;
  set.channel_std = cfg.channel_std;
  for (int idx : manifest.split_indices(split)) {
    const auto& row = manifest.rows[idx];
    Image img = read_ppm(row.path);
    if (img.h != cfg.input_resolution || img.w != cfg.input_resolution)
      img = resize_image(img, cfg.input_resolution, cfg.input_resolution);
    std::vector<std::uint8_t> raw(static_cast<size_t>(set.height) * set.width * 3);
    for (size_t k = 0; k < raw.size(); ++k) {
      const double v = img.c == 3 ? img.pix[k] : img.pix[k / 3];
      raw[k] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    }
    set.images.push_back(std::move(raw));
    set.labels.push_back(manifest.label_index(row.target));
  }
  return set;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kCheckpointMagic[8] = {'F', 'G', 'R', 'A', 'I', 'N', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto len = read_pod<std::uint64_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(MultiExpertModel& model, const RunConfig& cfg,
                     const std::vector<std::string>& class_vocabulary,
                     const std::string& path) {
  std::ostringstream out(std::ios::binary);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod(out, kCheckpointVersion);
  write_string(out, cfg.serialize());
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(class_vocabulary.size()));
  for (const auto& label : class_vocabulary) write_string(out, label);
  const auto params = model.params();
  write_pod<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    write_string(out, p.name);
    write_pod<std::uint64_t>(out, p.count);
    out.write(reinterpret_cast<const char*>(p.value),
              static_cast<std::streamsize>(p.count * sizeof(double)));
  }
  atomic_write_file(path, out.str());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw IncompatibilityError("not a checkpoint file: " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw IncompatibilityError("checkpoint format version " + std::to_string(version) +
                               " is not supported (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  LoadedCheckpoint loaded;
  loaded.config = RunConfig::parse(read_string(in));
  const auto vocab_count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < vocab_count; ++i)
    loaded.class_vocabulary.push_back(read_string(in));

  loaded.model = std::make_unique<MultiExpertModel>(
      loaded.config.model_config(static_cast<int>(loaded.class_vocabulary.size())));
  auto params = loaded.model->params();
  const auto param_count = read_pod<std::uint64_t>(in);
  if (param_count != params.size())
    throw IncompatibilityError("checkpoint holds " + std::to_string(param_count) +
                               " tensors, model expects " + std::to_string(params.size()));
  for (std::uint64_t i = 0; i < param_count; ++i) {
    const std::string name = read_string(in);
    const auto count = read_pod<std::uint64_t>(in);
    if (name != params[i].name || count != params[i].count)
      throw IncompatibilityError("checkpoint tensor '" + name +
                                 "' does not match model tensor '" + params[i].name + "'");
    in.read(reinterpret_cast<char*>(params[i].value),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint tensor data");
  }
  return loaded;
}

LoadedCheckpoint load_checkpoint(const std::string& path, const RunConfig& expected) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  const auto& c = loaded.config;
  if (c.expert_stages != expected.expert_stages)
    throw IncompatibilityError("checkpoint expert spans (" + join_list(c.expert_stages) +
                               ") do not match configured spans (" +
                               join_list(expected.expert_stages) + ")");
  if (c.stage_widths != expected.stage_widths || c.convs_per_stage != expected.convs_per_stage)
    throw IncompatibilityError("checkpoint backbone shape does not match configuration");
  if (c.descriptor_len != expected.descriptor_len)
    throw IncompatibilityError("checkpoint descriptor length does not match configuration");
  if (c.input_resolution != expected.input_resolution)
    throw IncompatibilityError("checkpoint input resolution does not match configuration");
  if (c.pooling != expected.pooling)
    throw IncompatibilityError("checkpoint pooling does not match configuration");
  return loaded;
}

// ---------------------------------------------------------------------------
// heatmaps

std::vector<std::string> export_heatmaps(const Image& image,
                                         const std::vector<Plane>& expert_maps,
                                         const Plane& overall_map, const std::string& dir,
                                         const std::string& stem, double alpha) {
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto write_overlay = [&](const Plane& map, const std::string& suffix) {
    Image overlay = overlay_heatmap(image, map, alpha);
    const std::string path = (fs::path(dir) / (stem + "_" + suffix + ".ppm")).string();
    const std::string tmp = path + ".tmp";
    write_ppm(overlay, tmp);
    fs::rename(tmp, path);
    written.push_back(path);
  };
  for (size_t e = 0; e < expert_maps.size(); ++e)
    write_overlay(expert_maps[e], "expert" + std::to_string(e + 1));
  write_overlay(overall_map, "overall");
  return written;
}

// ---------------------------------------------------------------------------
// prediction CSV

void write_predictions_csv(const std::string& path,
                           const std::vector<std::string>& protected_names,
                           const std::vector<PredictionRow>& rows) {
  std::string out = "id,true_label,predicted_label";
  for (const auto& name : protected_names) out += "," + csv_escape(name);
  const size_t k = rows.empty() ? 0 : rows.front().scores.size();
  for (size_t i = 0; i < k; ++i) out += ",score_" + std::to_string(i);
  out += "\n";
  for (const auto& r : rows) {
    out += csv_escape(r.id) + "," + std::to_string(r.true_label) + "," +
           std::to_string(r.predicted_label);
    for (const auto& v : r.protected_values) out += "," + csv_escape(v);
    for (double s : r.scores) out += "," + format_double(s);
    out += "\n";
  }
  atomic_write_file(path, out);
}

std::vector<fairness::EvalRecord> read_predictions_csv(
    const std::string& path, const std::vector<std::string>& protected_filter) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("predictions file is empty: " + path);
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "true_label" ||
      header[2] != "predicted_label")
    throw ValidationError("predictions header must start with id,true_label,predicted_label");

  std::vector<int> protected_cols;
  for (size_t i = 3; i < header.size(); ++i)
    if (header[i].rfind("score_", 0) != 0) {
      if (protected_filter.empty() ||
          std::find(protected_filter.begin(), protected_filter.end(), header[i]) !=
              protected_filter.end())
        protected_cols.push_back(static_cast<int>(i));
    }
  for (const auto& want : protected_filter)
    if (std::find(header.begin(), header.end(), want) == header.end())
      throw ValidationError("protected column '" + want + "' not present in " + path);
  if (protected_cols.empty())
    throw ValidationError("no protected columns found in " + path);

  std::vector<fairness::EvalRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError("predictions line " + std::to_string(line_no) +
                            ": column count mismatch");
    fairness::EvalRecord rec;
    rec.id = fields[0];
    rec.true_label = static_cast<int>(parse_int("true_label", fields[1]));
    rec.predicted_label = static_cast<int>(parse_int("predicted_label", fields[2]));
    for (int col : protected_cols) rec.subgroup.push_back(fields[col]);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<PredictionRow> evaluate_split(MultiExpertModel& model,
                                          const DatasetManifest& manifest,
                                          const std::string& split, const RunConfig& cfg) {
  const auto indices = manifest.split_indices(split);
  if (indices.empty())
    throw ValidationError("split '" + split + "' has no rows in the manifest");
  TrainingSet set = load_training_set(manifest, split, cfg);
  std::vector<PredictionRow> rows;
  rows.reserve(indices.size());
  const int bs = std::max(1, cfg.batch_size);
  for (size_t start = 0; start < indices.size(); start += bs) {
    const size_t end = std::min(indices.size(), start + bs);
    std::vector<int> chunk;
    for (size_t i = start; i < end; ++i) chunk.push_back(static_cast<int>(i));
    Tensor x = set.make_batch(chunk);
    std::vector<std::vector<double>> scores;
    std::vector<int> predicted;
    if (cfg.plain_baseline) {
      // a plain single-head model is scored by its deepest expert alone
      auto f = model.forward_expert(x, model.experts(), nn::Mode::Eval);
      for (int i = 0; i < x.n; ++i) {
        scores.emplace_back(f.scores.row(i).data(), f.scores.row(i).data() + f.scores.cols());
        predicted.push_back(nn::argmax_row(f.scores, i));
      }
    } else {
      auto fused = predict_fused(model, x, cfg.softmax_fusion);
      for (const auto& b : fused.bundles) {
        scores.emplace_back(b.fused.data(), b.fused.data() + b.fused.size());
        predicted.push_back(b.predicted_class);
      }
    }
    for (size_t i = 0; i < chunk.size(); ++i) {
      const auto& mrow = manifest.rows[indices[start + i]];
      PredictionRow row;
      row.id = mrow.path;
      row.true_label = set.labels[chunk[i]];
      row.predicted_label = predicted[i];
      row.protected_values = mrow.protected_values;
      row.scores = scores[i];
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace fairgrain
