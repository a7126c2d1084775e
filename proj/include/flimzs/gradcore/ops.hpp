#pragma once

#include <cstdint>
#include <span>

#include "flimzs/gradcore/tensor.hpp"

// Differentiable operator set. Every op records its backward rule on the
// result when any input requires a gradient. All spatial ops treat the
// tensor as N x C x H x W, row-major.
namespace flimzs::grad {

// weight: C_out x C_in x k x k, bias: C_out values (may be undefined).
// Zero padding. Throws ConfigError when (H + 2*padding - k) is not a
// multiple of stride.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

// weight: C_in x C_out x k x k. Output extent (H - 1) * stride + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, int stride);

// Training-mode normalization; statistics over N x H x W per channel.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      double eps = 1e-5);

struct Activation {
  enum class Kind { relu, leaky_relu };
  Kind kind = Kind::relu;
  double slope = 0.0;

  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation leaky_relu(double slope) { return {Kind::leaky_relu, slope}; }
};

// The derivative at exactly zero takes the positive branch.
template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind);

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  return activation(input, Activation::relu());
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, double slope) {
  return activation(input, Activation::leaky_relu(slope));
}

// 2x2 non-overlapping max; ties go to the first element in row-major order.
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& input);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

// Mean squared error restricted to positions where mask != 0.
template <typename T>
Tensor<T> masked_mse(const Tensor<T>& pred, const Tensor<T>& target,
                     std::span<const std::uint8_t> mask);

// Mean SSIM over every fully contained window x window box (uniform
// weights, population statistics). Single-channel inputs.
template <typename T>
Tensor<T> ssim(const Tensor<T>& a, const Tensor<T>& b, int window = 7, double c1 = 1e-4,
               double c2 = 9e-4);

// Anisotropic L1 total variation divided by the pixel count.
template <typename T>
Tensor<T> total_variation(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double offset);

}  // namespace flimzs::grad
