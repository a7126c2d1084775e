#include "flimzs/gradcore/layers.hpp"

#include <cmath>

namespace flimzs::grad {

template <typename T>
void he_normal(Tensor<T>& tensor, std::size_t fan_in, const CounterRng& rng,
               const std::string& name) {
  CounterRng stream = rng.split(name);
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (T& v : tensor.mutable_values()) v = static_cast<T>(stddev * stream.normal());
}

template <typename T>
Conv<T>::Conv(ParameterStore<T>& store, const std::string& name, std::size_t in,
              std::size_t out, std::size_t k, const CounterRng& rng)
    : weight(store.add(name + ".weight", Shape{out, in, k, k})),
      bias(store.add(name + ".bias", Shape{1, out, 1, 1})),
      padding(static_cast<int>(k / 2)) {
  he_normal(weight, in * k * k, rng, name + ".weight");
}

template <typename T>
UpConv<T>::UpConv(ParameterStore<T>& store, const std::string& name, std::size_t in,
                  std::size_t out, const CounterRng& rng)
    : weight(store.add(name + ".weight", Shape{in, out, 2, 2})),
      bias(store.add(name + ".bias", Shape{1, out, 1, 1})) {
  // With kernel == stride every output pixel receives exactly `in` inputs.
  he_normal(weight, in, rng, name + ".weight");
}

template <typename T>
BatchNorm<T>::BatchNorm(ParameterStore<T>& store, const std::string& name, std::size_t channels)
    : gamma(store.add(name + ".gamma", Shape{1, channels, 1, 1})),
      beta(store.add(name + ".beta", Shape{1, channels, 1, 1})) {
  for (T& v : gamma.mutable_values()) v = T(1);
}

template <typename T>
DoubleConv<T>::DoubleConv(ParameterStore<T>& store, const std::string& name, std::size_t in,
                          std::size_t out, bool batchnorm, Activation activation,
                          const CounterRng& rng)
    : conv1(store, name + ".conv1", in, out, 3, rng),
      conv2(store, name + ".conv2", out, out, 3, rng),
      use_batchnorm(batchnorm),
      act(activation) {
  if (batchnorm) {
    bn1 = BatchNorm<T>(store, name + ".bn1", out);
    bn2 = BatchNorm<T>(store, name + ".bn2", out);
  }
}

template <typename T>
Tensor<T> DoubleConv<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> h = conv1(x);
  if (use_batchnorm) h = bn1(h);
  h = activation(h, act);
  h = conv2(h);
  if (use_batchnorm) h = bn2(h);
  return activation(h, act);
}

template struct Conv<float>;
template struct Conv<double>;
template struct UpConv<float>;
template struct UpConv<double>;
template struct BatchNorm<float>;
template struct BatchNorm<double>;
template struct DoubleConv<float>;
template struct DoubleConv<double>;
template void he_normal(Tensor<float>&, std::size_t, const CounterRng&, const std::string&);
template void he_normal(Tensor<double>&, std::size_t, const CounterRng&, const std::string&);

}  // namespace flimzs::grad
