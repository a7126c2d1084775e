#include "flimzs/zsnet/loss.hpp"

#include "flimzs/errors.hpp"

namespace flimzs::zsnet {

using grad::Tensor;

void validate(const LossWeights& w) {
  if (!(w.fidelity >= 0.0 && w.structure >= 0.0 && w.tv >= 0.0)) {
    throw ConfigError("loss weights must be non-negative");
  }
}

template <typename T>
CompositeLoss<T> composite_loss(const NetOutputs<T>& out, const Tensor<T>& y_g,
                                const Tensor<T>& y_s, const Tensor<T>& prior_i,
                                const LossWeights& weights) {
  validate(weights);
  const Tensor<T> intensity = grad::mse(out.i, prior_i);
  const Tensor<T> fidelity = grad::add(grad::mse(y_g, out.g), grad::mse(y_s, out.s));
  const Tensor<T> structure = grad::add_scalar(
      grad::scale(grad::add(grad::ssim(out.g, out.i), grad::ssim(out.s, out.i)), -1.0), 2.0);
  const Tensor<T> tv = grad::add(grad::total_variation(out.g), grad::total_variation(out.s));

  CompositeLoss<T> loss;
  loss.components = {intensity.item(), fidelity.item(), structure.item(), tv.item()};
  loss.total = intensity;
  const std::pair<const Tensor<T>*, double> terms[] = {
      {&fidelity, weights.fidelity}, {&structure, weights.structure}, {&tv, weights.tv}};
  for (const auto& [term, weight] : terms) {
    if (weight != 0.0) loss.total = grad::add(loss.total, grad::scale(*term, weight));
  }
  return loss;
}

template CompositeLoss<float> composite_loss(const NetOutputs<float>&, const Tensor<float>&,
                                             const Tensor<float>&, const Tensor<float>&,
                                             const LossWeights&);
template CompositeLoss<double> composite_loss(const NetOutputs<double>&, const Tensor<double>&,
                                              const Tensor<double>&, const Tensor<double>&,
                                              const LossWeights&);

}  // namespace flimzs::zsnet
