#include "flimzs/prior/unet.hpp"

#include "flimzs/errors.hpp"

namespace flimzs::prior {

using grad::Activation;
using grad::DoubleConv;
using grad::Tensor;

template <typename T>
UNet<T>::UNet(std::uint64_t seed, std::size_t base, double leaky_slope) {
  const CounterRng rng = CounterRng(seed).split("prior_unet");
  const Activation act = Activation::leaky_relu(leaky_slope);
  enc1_ = DoubleConv<T>(store_, "enc1", 1, base, false, act, rng);
  enc2_ = DoubleConv<T>(store_, "enc2", base, 2 * base, false, act, rng);
  enc3_ = DoubleConv<T>(store_, "enc3", 2 * base, 4 * base, false, act, rng);
  bottleneck_ = DoubleConv<T>(store_, "bottleneck", 4 * base, 8 * base, false, act, rng);
  up3_ = grad::UpConv<T>(store_, "up3", 8 * base, 4 * base, rng);
  dec3_ = DoubleConv<T>(store_, "dec3", 8 * base, 4 * base, false, act, rng);
  up2_ = grad::UpConv<T>(store_, "up2", 4 * base, 2 * base, rng);
  dec2_ = DoubleConv<T>(store_, "dec2", 4 * base, 2 * base, false, act, rng);
  up1_ = grad::UpConv<T>(store_, "up1", 2 * base, base, rng);
  dec1_ = DoubleConv<T>(store_, "dec1", 2 * base, base, false, act, rng);
  head_ = grad::Conv<T>(store_, "head", base, 1, 1, rng);
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x) const {
  const auto& sh = x.shape();
  if (sh.c != 1 || sh.h % 8 != 0 || sh.w % 8 != 0) {
    throw DimensionError("prior U-Net expects 1 channel and extents divisible by 8, got " +
                         sh.str());
  }
  const Tensor<T> f1 = enc1_(x);
  const Tensor<T> f2 = enc2_(grad::maxpool2x2(f1));
  const Tensor<T> f3 = enc3_(grad::maxpool2x2(f2));
  const Tensor<T> f4 = bottleneck_(grad::maxpool2x2(f3));
  Tensor<T> h = dec3_(grad::concat_channels(up3_(f4), f3));
  h = dec2_(grad::concat_channels(up2_(h), f2));
  h = dec1_(grad::concat_channels(up1_(h), f1));
  return head_(h);
}

template class UNet<float>;
template class UNet<double>;

}  // namespace flimzs::prior
