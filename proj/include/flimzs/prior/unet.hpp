#pragma once

#include <cstdint>

#include "flimzs/gradcore/layers.hpp"

namespace flimzs::prior {

// Three-level U-Net for single-channel intensity denoising: encoder widths
// base, 2*base, 4*base with a 8*base bottleneck (1 -> 32 -> 64 -> 128 -> 256
// at the default base of 32), LeakyReLU after every convolution, 2x2 max
// pooling, stride-2 transposed-convolution upsampling and a skip
// concatenation at each level. Spatial extents must be multiples of 8.
template <typename T>
class UNet {
 public:
  explicit UNet(std::uint64_t seed, std::size_t base_channels = 32, double leaky_slope = 0.01);

  grad::Tensor<T> forward(const grad::Tensor<T>& x) const;

  grad::ParameterStore<T>& parameters() noexcept { return store_; }
  const grad::ParameterStore<T>& parameters() const noexcept { return store_; }

 private:
  grad::ParameterStore<T> store_;
  grad::DoubleConv<T> enc1_, enc2_, enc3_, bottleneck_, dec3_, dec2_, dec1_;
  grad::UpConv<T> up3_, up2_, up1_;
  grad::Conv<T> head_;
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace flimzs::prior
