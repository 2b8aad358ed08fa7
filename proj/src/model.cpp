#include "fairgrain/model.hpp"

namespace fairgrain {

namespace {
std::vector<ExpertSpan> make_spans(const std::vector<int>& stages) {
  std::vector<ExpertSpan> spans;
  for (size_t i = 0; i < stages.size(); ++i)
    spans.push_back({static_cast<int>(i) + 1, stages[i]});
  return spans;
}
}  // namespace

MultiExpertModel::MultiExpertModel(const ModelConfig& cfg)
    : cfg_(cfg),
      backbone_(cfg.backbone),
      spans_(make_spans(cfg.expert_stages)),
      overall_clf_(cfg.descriptor_len * static_cast<int>(cfg.expert_stages.size()),
                   cfg.num_classes) {
  validate_spans(spans_, backbone_.stages());
  if (cfg.num_classes < 2) throw ConfigError("model: need at least 2 classes");
  heads_.reserve(spans_.size());
  for (const auto& sp : spans_)
    heads_.emplace_back(backbone_.stage_out_channels(sp.terminal_stage),
                        cfg.descriptor_len, cfg.num_classes, cfg.pool);
}

void MultiExpertModel::init_params(Rng& rng) {
  backbone_.init_params(rng);
  for (auto& h : heads_) h.init_params(rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(overall_clf_.in_dim()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (long i = 0; i < overall_clf_.weight.size(); ++i)
    overall_clf_.weight.data()[i] = dist(rng);
  for (long i = 0; i < overall_clf_.bias.size(); ++i) overall_clf_.bias[i] = dist(rng);
}

MultiExpertModel::Forward MultiExpertModel::forward_all(
    const Tensor& x, nn::Mode stage_mode, const std::vector<nn::Mode>& head_modes) {
  if (static_cast<int>(head_modes.size()) != experts())
    throw ConfigError("forward_all: one mode per expert required");
  auto stage_maps = backbone_.forward_stages(x, backbone_.stage_count(), stage_mode);
  Forward out;
  for (int e = 0; e < experts(); ++e) {
    auto [v, xpp] = heads_[e].compress(stage_maps[spans_[e].terminal_stage - 1],
                                       head_modes[e]);
    out.scores.push_back(heads_[e].classify(v));
    out.descriptors.push_back(std::move(v));
    out.xpps.push_back(std::move(xpp));
  }
  out.overall_descriptor = concat_overall(out.descriptors);
  out.overall_scores = overall_clf_.forward(out.overall_descriptor);
  return out;
}

MultiExpertModel::Forward MultiExpertModel::forward_all(const Tensor& x, nn::Mode mode) {
  return forward_all(x, mode, std::vector<nn::Mode>(experts(), mode));
}

MultiExpertModel::ExpertForward MultiExpertModel::forward_expert(const Tensor& x, int n,
                                                                 nn::Mode mode) {
  if (n < 1 || n > experts()) throw ConfigError("forward_expert: index out of range");
  const int m = spans_[n - 1].terminal_stage;
  auto stage_maps = backbone_.forward_stages(x, m, mode);
  ExpertForward out;
  auto [v, xpp] = heads_[n - 1].compress(stage_maps[m - 1], mode);
  out.scores = heads_[n - 1].classify(v);
  out.descriptors = std::move(v);
  out.xpp = std::move(xpp);
  return out;
}

void MultiExpertModel::backward_expert(int n, const RowMat& dscores) {
  if (n < 1 || n > experts()) throw ConfigError("backward_expert: index out of range");
  RowMat ddesc = heads_[n - 1].backward_classify(dscores);
  Tensor tap = heads_[n - 1].backward_compress(ddesc);
  std::vector<Tensor> taps(backbone_.stage_count());
  taps[spans_[n - 1].terminal_stage - 1] = std::move(tap);
  backbone_.backward_stages(taps);
}

void MultiExpertModel::backward_joint(const std::vector<RowMat>& dscores,
                                      const RowMat& doverall) {
  if (static_cast<int>(dscores.size()) != experts())
    throw ConfigError("backward_joint: one gradient per expert required");
  RowMat dconcat = overall_clf_.backward(doverall);
  std::vector<RowMat> slices = split_overall(dconcat, experts());
  std::vector<Tensor> taps(backbone_.stage_count());
  for (int e = 0; e < experts(); ++e) {
    RowMat ddesc = slices[e];
    if (dscores[e].size() > 0) ddesc += heads_[e].backward_classify(dscores[e]);
    Tensor tap = heads_[e].backward_compress(ddesc);
    const int m = spans_[e].terminal_stage;
    if (taps[m - 1].size() == 0) {
      taps[m - 1] = std::move(tap);
    } else {
      for (size_t i = 0; i < tap.data.size(); ++i) taps[m - 1].data[i] += tap.data[i];
    }
  }
  backbone_.backward_stages(taps);
}

MultiExpertModel::Regions MultiExpertModel::generate_regions(const Tensor& x,
                                                             const Forward& fwd) const {
  const MaskConfig mask_cfg{cfg_.mask_threshold};
  Regions out;
  const int N = experts();
  out.maps.resize(N);
  out.boxes.resize(N);
  out.expert_crops.assign(N, Tensor(x.n, x.h, x.w, x.c));
  out.overall_crop = Tensor(x.n, x.h, x.w, x.c);
  for (int e = 0; e < N; ++e) {
    const ExpertHead& head = heads_[e];
    for (int i = 0; i < x.n; ++i) {
      const int predicted = nn::argmax_row(fwd.scores[e], i);
      const Vec weights = head.classifier_weights().row(predicted);
      AttentionMap am;
      am.raw_cam = compute_cam(fwd.xpps[e], i, weights);
      am.upsampled = upsample_bilinear(am.raw_cam, x.h, x.w);
      am.normalized = normalize_minmax(am.upsampled);
      Plane mask = threshold_mask(am.normalized, mask_cfg);
      Box box;
      if (!mask_bounding_box(mask, box)) box = {0, 0, x.h - 1, x.w - 1};
      crop_resize_into(x, i, box, out.expert_crops[e], i);
      out.maps[e].push_back(std::move(am));
      out.boxes[e].push_back(box);
    }
  }
  for (int i = 0; i < x.n; ++i) {
    std::vector<Plane> norm_maps;
    norm_maps.reserve(N);
    for (int e = 0; e < N; ++e) norm_maps.push_back(out.maps[e][i].normalized);
    Plane combined = sum_normalize(norm_maps);
    Plane mask = threshold_mask(combined, mask_cfg);
    Box box;
    if (!mask_bounding_box(mask, box)) box = {0, 0, x.h - 1, x.w - 1};
    crop_resize_into(x, i, box, out.overall_crop, i);
    out.overall_boxes.push_back(box);
    out.overall_maps.push_back(std::move(combined));
  }
  return out;
}

std::vector<nn::ParamRef> MultiExpertModel::params() {
  if (param_cache_.empty()) {
    backbone_.collect_params(param_cache_);
    for (size_t e = 0; e < heads_.size(); ++e)
      heads_[e].collect_params("expert" + std::to_string(e + 1), param_cache_);
    overall_clf_.collect_params("overall_clf", param_cache_);
  }
  return param_cache_;
}

void MultiExpertModel::zero_grad() {
  backbone_.zero_grad();
  for (auto& h : heads_) h.zero_grad();
  overall_clf_.zero_grad();
}

std::vector<double> MultiExpertModel::snapshot() const {
  auto& self = const_cast<MultiExpertModel&>(*this);
  std::vector<double> snap;
  for (const auto& p : self.params()) snap.insert(snap.end(), p.value, p.value + p.count);
  return snap;
}

void MultiExpertModel::restore(const std::vector<double>& snap) {
  size_t off = 0;
  for (const auto& p : params()) {
    if (off + p.count > snap.size()) throw StateError("restore: snapshot size mismatch");
    std::copy(snap.begin() + off, snap.begin() + off + p.count, p.value);
    off += p.count;
  }
  if (off != snap.size()) throw StateError("restore: snapshot size mismatch");
}

}  // namespace fairgrain
