#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flimzs/gradcore/parameter.hpp"

namespace flimzs::grad {

struct GradCheckOptions {
  double h = 1e-4;
  // Entries sampled per parameter tensor; 0 checks every entry.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
  // Perturbations that flip any ReLU/maxpool/TV branch, or land within this
  // distance of one, are excluded from the comparison.
  double kink_margin = 1e-6;
  // Absolute disagreement up to roundoff_ulps * eps * |loss| / h is
  // attributed to cancellation in the difference quotient, not to the
  // analytic gradient.
  double roundoff_ulps = 64.0;
};

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  bool dead = false;  // never reached by backward
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  std::vector<ParamCheck> params;
  std::vector<std::string> zero_grad_params;
};

// Compares reverse-mode gradients against central differences.
//   rel = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
// `loss_fn` must rebuild the scalar loss from the current parameter values
// on every call. Parameters the loss never reaches are reported as
// zero-grad and skipped. Non-finite intermediates propagate as
// NumericError naming the op.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss_fn,
                           std::span<Parameter<double>> params,
                           const GradCheckOptions& options = {});

}  // namespace flimzs::grad
