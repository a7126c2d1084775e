#pragma once

#include <string>
#include <vector>

#include "flimzs/gradcore/tensor.hpp"

namespace flimzs::grad {

template <typename T>
struct Parameter {
  std::string name;  // dotted path, e.g. "enc_g.level1.conv1.weight"
  Tensor<T> tensor;
};

// Owns the trainable tensors of one network. Names are unique.
template <typename T>
class ParameterStore {
 public:
  // Registers a zero-filled tensor that requires a gradient.
  Tensor<T> add(std::string name, Shape shape);

  std::vector<Parameter<T>>& params() noexcept { return params_; }
  const std::vector<Parameter<T>>& params() const noexcept { return params_; }
  const Parameter<T>* find(const std::string& name) const;

  // Total number of scalar parameters.
  std::size_t count() const noexcept;
  void zero_grad();

 private:
  std::vector<Parameter<T>> params_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace flimzs::grad
