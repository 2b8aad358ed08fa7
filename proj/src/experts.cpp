#include "fairgrain/experts.hpp"

namespace fairgrain {

ExpertHead::ExpertHead(int in_channels, int descriptor_len, int num_classes,
                       nn::PoolKind pool)
    : descriptor_len_(descriptor_len),
      reduce_(in_channels, descriptor_len / 2, 1, 1, 0),
      bn1_(descriptor_len / 2),
      expand_(descriptor_len / 2, descriptor_len, 3, 1, 1),
      bn2_(descriptor_len),
      pool_(pool),
      classifier_(descriptor_len, num_classes) {
  if (descriptor_len < 2 || descriptor_len % 2 != 0)
    throw ConfigError("expert head: descriptor length must be even and >= 2");
}

void ExpertHead::init_params(Rng& rng) {
  nn::kaiming_init(reduce_.weight, reduce_.weight.rows(), rng);
  nn::kaiming_init(expand_.weight, expand_.weight.rows(), rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(classifier_.in_dim()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (long i = 0; i < classifier_.weight.size(); ++i)
    classifier_.weight.data()[i] = dist(rng);
  for (long i = 0; i < classifier_.bias.size(); ++i) classifier_.bias[i] = dist(rng);
}

std::pair<RowMat, Tensor> ExpertHead::compress(const Tensor& x, nn::Mode mode) {
  if (x.c != reduce_.in_ch())
    throw ConfigError("compress: feature map has " + std::to_string(x.c) +
                      " channels, head expects " + std::to_string(reduce_.in_ch()));
  Tensor xp = elu1_.forward(bn1_.forward(reduce_.forward(x), mode));
  Tensor xpp = elu2_.forward(bn2_.forward(expand_.forward(xp), mode));
  RowMat v = pool_.forward(xpp);
  return {std::move(v), std::move(xpp)};
}

RowMat ExpertHead::classify(const RowMat& descriptors) {
  return classifier_.forward(descriptors);
}

RowMat ExpertHead::backward_classify(const RowMat& dscores) {
  return classifier_.backward(dscores);
}

Tensor ExpertHead::backward_compress(const RowMat& ddesc) {
  Tensor g = pool_.backward(ddesc);
  g = elu2_.backward(g);
  g = bn2_.backward(g);
  g = expand_.backward(g);
  g = elu1_.backward(g);
  g = bn1_.backward(g);
  return reduce_.backward(g);
}

void ExpertHead::collect_params(const std::string& prefix, std::vector<nn::ParamRef>& out) {
  reduce_.collect_params(prefix + ".reduce", out);
  bn1_.collect_params(prefix + ".bn1", out);
  expand_.collect_params(prefix + ".expand", out);
  bn2_.collect_params(prefix + ".bn2", out);
  classifier_.collect_params(prefix + ".clf", out);
}

void ExpertHead::zero_grad() {
  reduce_.zero_grad();
  bn1_.zero_grad();
  expand_.zero_grad();
  bn2_.zero_grad();
  classifier_.zero_grad();
}

RowMat concat_overall(const std::vector<RowMat>& descriptors) {
  if (descriptors.empty()) throw ConfigError("concat_overall: no descriptors");
  const long n = descriptors.front().rows();
  const long cv = descriptors.front().cols();
  for (const auto& d : descriptors)
    if (d.rows() != n || d.cols() != cv)
      throw ConfigError("concat_overall: descriptor shape mismatch");
  RowMat out(n, cv * static_cast<long>(descriptors.size()));
  for (size_t e = 0; e < descriptors.size(); ++e)
    out.middleCols(static_cast<long>(e) * cv, cv) = descriptors[e];
  return out;
}

std::vector<RowMat> split_overall(const RowMat& doverall, int experts) {
  if (experts <= 0 || doverall.cols() % experts != 0)
    throw ConfigError("split_overall: width not divisible by expert count");
  const long cv = doverall.cols() / experts;
  std::vector<RowMat> parts;
  parts.reserve(experts);
  for (int e = 0; e < experts; ++e) parts.push_back(doverall.middleCols(e * cv, cv));
  return parts;
}

}  // namespace fairgrain
