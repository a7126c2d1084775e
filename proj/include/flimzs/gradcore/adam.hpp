#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flimzs/gradcore/parameter.hpp"

namespace flimzs::grad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;  // first moments, one array per parameter
  std::vector<std::vector<T>> v;  // second moments
};

// One bias-corrected Adam update with decoupled weight decay:
//   p <- p * (1 - lr * wd);  p <- p - lr * m_hat / (sqrt(v_hat) + eps).
// Moments are allocated on the first call. Parameters that received no
// gradient (outside the graph of the loss) are left untouched, decay included.
template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state);

// Halves (by `factor`) the learning rate once the monitored loss has failed
// to improve by a relative `threshold` for more than `patience` steps.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor = 0.5, int patience = 50, double min_lr = 1e-5,
                   double threshold = 1e-4);

  // Returns the learning rate to use for the next step.
  double step(double loss, double lr);

  double best() const noexcept { return best_; }
  int bad_steps() const noexcept { return bad_steps_; }

 private:
  double factor_;
  int patience_;
  double min_lr_;
  double threshold_;
  double best_;
  int bad_steps_ = 0;
};

}  // namespace flimzs::grad
