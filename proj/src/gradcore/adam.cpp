#include "flimzs/gradcore/adam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flimzs/errors.hpp"

namespace flimzs::grad {

template <typename T>
Tensor<T> ParameterStore<T>::add(std::string name, Shape shape) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name: " + name);
  auto tensor = Tensor<T>::zeros(shape, true);
  params_.push_back({std::move(name), tensor});
  return tensor;
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::size_t ParameterStore<T>::count() const noexcept {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.tensor.numel();
  return total;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class ParameterStore<float>;
template class ParameterStore<double>;

template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state) {
  const AdamOptions& o = state.options;
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), T(0));
      state.v.emplace_back(p.tensor.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: optimizer state belongs to a different parameter list");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  const double decay = 1.0 - o.lr * o.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].tensor.has_grad()) continue;
    auto value = params[k].tensor.mutable_values();
    const auto grad = params[k].tensor.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double p = value[i] * decay;
      value[i] = static_cast<T>(p - o.lr * (mi / bc1) / (std::sqrt(vi / bc2) + o.eps));
    }
  }
}

template void adam_step(std::span<Parameter<float>>, AdamState<float>&);
template void adam_step(std::span<Parameter<double>>, AdamState<double>&);

PlateauScheduler::PlateauScheduler(double factor, int patience, double min_lr, double threshold)
    : factor_(factor),
      patience_(patience),
      min_lr_(min_lr),
      threshold_(threshold),
      best_(std::numeric_limits<double>::infinity()) {
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
  if (patience < 0) throw ConfigError("plateau patience must be >= 0");
}

double PlateauScheduler::step(double loss, double lr) {
  if (loss < best_ * (1.0 - threshold_)) {
    best_ = loss;
    bad_steps_ = 0;
    return lr;
  }
  if (++bad_steps_ > patience_) {
    bad_steps_ = 0;
    return std::max(lr * factor_, min_lr_);
  }
  return lr;
}

}  // namespace flimzs::grad
