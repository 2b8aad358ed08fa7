#include <algorithm>
#include <filesystem>
#include <random>

#include "fairgrain/pipeline.hpp"

namespace fs = std::filesystem;

namespace fairgrain {

namespace {

struct SampleSpec {
  bool positive = false;
  bool warm = false;
};

// Exact per-split class balance and tint fractions, then shuffled.
std::vector<SampleSpec> make_specs(int count, double warm_fraction, Rng& rng) {
  std::vector<SampleSpec> specs(count);
  const int positives = count / 2;
  const int warm = static_cast<int>(count * warm_fraction + 0.5);
  for (int i = 0; i < count; ++i) specs[i].positive = i < positives;
  std::shuffle(specs.begin(), specs.end(), rng);
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < count; ++i) specs[order[i]].warm = i < warm;
  return specs;
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void fill_square(Image& img, int top, int left, int size, double delta) {
  for (int y = top; y < top + size; ++y)
    for (int x = left; x < left + size; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.at(y, x, ch) = std::clamp(img.at(y, x, ch) + delta, 0.0, 1.0);
}

}  // namespace

void generate_synthetic_dataset(const std::string& dir, const SyntheticConfig& cfg) {
  if (cfg.resolution < 48) throw ConfigError("synthetic dataset: resolution too small");
  fs::create_directories(fs::path(dir) / "images");
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 0.07);

  std::string manifest = "path,target,tint,split\n";
  std::string centers = "path,row,col\n";

  auto emit_split = [&](const std::string& split, int count, double warm_fraction) {
    auto specs = make_specs(count, warm_fraction, rng);
    for (int i = 0; i < count; ++i) {
      const auto& spec = specs[i];
      const int R = cfg.resolution;
      Image img(R, R, 3);

      // tinted background with pixel noise
      double base[3];
      const double u = uniform(rng, 0.0, 1.0);
      if (spec.warm) {
        base[0] = 0.48 + 0.14 * u;
        base[1] = 0.38 + 0.10 * u;
        base[2] = 0.28 + 0.08 * u;
      } else {
        base[0] = 0.28 + 0.08 * u;
        base[1] = 0.38 + 0.10 * u;
        base[2] = 0.48 + 0.14 * u;
      }
      for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x)
          for (int ch = 0; ch < 3; ++ch)
            img.at(y, x, ch) = std::clamp(base[ch] + noise(rng), 0.0, 1.0);

      // the cool group gets weaker contrast; this is what makes a
      // high-level-only classifier struggle on that tint
      const double contrast =
          spec.warm ? uniform(rng, 0.34, 0.52) : uniform(rng, 0.16, 0.34);

      // small square distractors on every image
      const int dots = 3 + uniform_index(rng, 3);
      for (int d = 0; d < dots; ++d) {
        const int ds = 2 + uniform_index(rng, 3);
        const int dy = uniform_index(rng, R - ds);
        const int dx = uniform_index(rng, R - ds);
        fill_square(img, dy, dx, ds, contrast);
      }

      int center_row = -1, center_col = -1;
      if (spec.positive) {
        const int size = 14 + uniform_index(rng, 9);  // 14..22
        const int margin = 4;
        const int top = margin + uniform_index(rng, R - size - 2 * margin);
        const int left = margin + uniform_index(rng, R - size - 2 * margin);
        fill_square(img, top, left, size, contrast);
        center_row = top + size / 2;
        center_col = left + size / 2;
      }

      char name[64];
      std::snprintf(name, sizeof(name), "%s_%05d.ppm", split.c_str(), i);
      const std::string rel = std::string("images/") + name;
      write_ppm(img, (fs::path(dir) / rel).string());
      manifest += rel + "," + (spec.positive ? "square" : "none") + "," +
                  (spec.warm ? "warm" : "cool") + "," + split + "\n";
      centers += rel + "," + std::to_string(center_row) + "," +
                 std::to_string(center_col) + "\n";
    }
  };

  emit_split("train", cfg.train_count, cfg.warm_fraction_train);
  emit_split("val", cfg.val_count, cfg.warm_fraction_eval);
  emit_split("test", cfg.test_count, cfg.warm_fraction_eval);

  atomic_write_file((fs::path(dir) / "manifest.csv").string(), manifest);
  atomic_write_file((fs::path(dir) / "centers.csv").string(), centers);
}

}  // namespace fairgrain
