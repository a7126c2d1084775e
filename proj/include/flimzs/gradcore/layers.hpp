#pragma once

#include <string>

#include "flimzs/gradcore/ops.hpp"
#include "flimzs/gradcore/parameter.hpp"
#include "flimzs/rng.hpp"

// Small parameterized building blocks shared by the intensity prior and the
// dual-encoder network. Weights are He-normal, drawn from a stream derived
// from the parameter name, so initialization does not depend on the order
// in which layers are constructed.
namespace flimzs::grad {

template <typename T>
struct Conv {
  Tensor<T> weight;  // out x in x k x k
  Tensor<T> bias;
  int padding = 0;

  Conv() = default;
  Conv(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
       std::size_t k, const CounterRng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, 1, padding); }
};

// Stride-2, 2x2 upsampling.
template <typename T>
struct UpConv {
  Tensor<T> weight;  // in x out x 2 x 2
  Tensor<T> bias;

  UpConv() = default;
  UpConv(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
         const CounterRng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv_transpose2d(x, weight, bias, 2);
  }
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;

  BatchNorm() = default;
  BatchNorm(ParameterStore<T>& store, const std::string& name, std::size_t channels);
  Tensor<T> operator()(const Tensor<T>& x) const { return batchnorm2d(x, gamma, beta); }
};

// conv3x3 -> [BN] -> act -> conv3x3 -> [BN] -> act
template <typename T>
struct DoubleConv {
  Conv<T> conv1, conv2;
  BatchNorm<T> bn1, bn2;
  bool use_batchnorm = true;
  Activation act;

  DoubleConv() = default;
  DoubleConv(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
             bool batchnorm, Activation act, const CounterRng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

// Fills `tensor` with N(0, 2 / fan_in) samples from rng.split(name).
template <typename T>
void he_normal(Tensor<T>& tensor, std::size_t fan_in, const CounterRng& rng,
               const std::string& name);

}  // namespace flimzs::grad
