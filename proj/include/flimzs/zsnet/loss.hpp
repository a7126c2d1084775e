#pragma once

#include "flimzs/gradcore/ops.hpp"
#include "flimzs/zsnet/network.hpp"

namespace flimzs::zsnet {

struct LossWeights {
  double fidelity = 1.0;    // lambda1
  double structure = 0.1;   // lambda2
  double tv = 0.2;          // lambda3
};

void validate(const LossWeights& w);

struct LossComponents {
  double intensity = 0.0;
  double fidelity = 0.0;
  double structure = 0.0;
  double tv = 0.0;

  double weighted_total(const LossWeights& w) const {
    return intensity + w.fidelity * fidelity + w.structure * structure + w.tv * tv;
  }
};

template <typename T>
struct CompositeLoss {
  grad::Tensor<T> total;
  LossComponents components;
};

// total = mse(y_I_hat, prior)
//       + l1 * [mse(y_g, y_g_hat) + mse(y_s, y_s_hat)]
//       + l2 * [2 - ssim(y_g_hat, y_I_hat) - ssim(y_s_hat, y_I_hat)]
//       + l3 * [tv(y_g_hat) + tv(y_s_hat)]
// All four components are always evaluated and reported; terms with a zero
// weight are left out of the differentiated graph.
template <typename T>
CompositeLoss<T> composite_loss(const NetOutputs<T>& out, const grad::Tensor<T>& y_g,
                                const grad::Tensor<T>& y_s, const grad::Tensor<T>& prior_i,
                                const LossWeights& weights);

}  // namespace flimzs::zsnet
