#include "fairgrain/inference.hpp"

#include <cmath>

namespace fairgrain {

namespace {

Vec maybe_softmax(const Vec& logits, bool apply) {
  if (!apply) return logits;
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp();
  return e / e.sum();
}

int argmax_lowest(const Vec& v) {
  int best = 0;
  for (int k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = k;
  return best;
}

}  // namespace

FusedOutput predict_fused(MultiExpertModel& model, const Tensor& images, bool softmax_fuse) {
  if (images.n == 0) throw ValidationError("predict_fused: empty image batch");
  const int N = model.experts();
  auto fwd_raw = model.forward_all(images, nn::Mode::Eval);
  auto regions = model.generate_regions(images, fwd_raw);
  auto fwd_region = model.forward_all(regions.overall_crop, nn::Mode::Eval);

  FusedOutput out;
  out.overall_boxes = regions.overall_boxes;
  out.bundles.reserve(images.n);
  for (int i = 0; i < images.n; ++i) {
    PredictionBundle b;
    for (int e = 0; e < N; ++e)
      b.raw_scores.push_back(maybe_softmax(fwd_raw.scores[e].row(i).transpose(), softmax_fuse));
    b.raw_scores.push_back(
        maybe_softmax(fwd_raw.overall_scores.row(i).transpose(), softmax_fuse));
    for (int e = 0; e < N; ++e)
      b.region_scores.push_back(
          maybe_softmax(fwd_region.scores[e].row(i).transpose(), softmax_fuse));
    b.region_scores.push_back(
        maybe_softmax(fwd_region.overall_scores.row(i).transpose(), softmax_fuse));

    b.fused = Vec::Zero(model.num_classes());
    for (const auto& s : b.raw_scores) b.fused += s;
    for (const auto& s : b.region_scores) b.fused += s;
    b.fused /= static_cast<double>(b.constituents());
    b.predicted_class = argmax_lowest(b.fused);
    out.bundles.push_back(std::move(b));
  }
  return out;
}

Vec predict_single(MultiExpertModel& model, const Tensor& image, const ScoreSource& source,
                   bool softmax_fuse) {
  if (source.expert < 0 || source.expert > model.experts())
    throw ConfigError("predict_single: unknown expert " + std::to_string(source.expert));
  auto out = predict_fused(model, image, softmax_fuse);
  const auto& bundle = out.bundles.front();
  const auto& side = source.from_region ? bundle.region_scores : bundle.raw_scores;
  // experts are stored 1..N at indices 0..N-1; the overall vector is last
  const int idx = source.expert == 0 ? model.experts() : source.expert - 1;
  return side[idx];
}

}  // namespace fairgrain
