#pragma once

#include <cstdint>

#include "flimzs/gradcore/layers.hpp"

namespace flimzs::zsnet {

template <typename T>
struct NetOutputs {
  grad::Tensor<T> g;
  grad::Tensor<T> s;
  grad::Tensor<T> i;
};

// Two independent two-level encoders (for y_g and y_s) feeding three
// decoders:
//
//   enc_x:   level1 = dconv(1 -> w) @ H,  level2 = dconv(w -> 2w) @ H/2
//   dec_x:   up(2w -> w) ++ enc_x.level1  -> dconv(2w -> w) -> 1x1 -> y_x
//   fusion:  enc_g.level2 ++ enc_s.level2 (4w) -> dconv(4w -> 2w) @ H/2
//            up(2w -> w) ++ enc_g.level1 ++ enc_s.level1 (3w)
//            -> dconv(3w -> w) -> 1x1 -> y_I
//
// dconv is conv3x3-BN-ReLU twice; w = 32 by default. The g and s decoders
// only see their own encoder, so their outputs are exactly independent of
// the other channel.
template <typename T>
class DualEncoderNet {
 public:
  explicit DualEncoderNet(std::uint64_t seed, std::size_t width = 32);

  NetOutputs<T> forward(const grad::Tensor<T>& y_g, const grad::Tensor<T>& y_s) const;

  grad::ParameterStore<T>& parameters() noexcept { return store_; }
  const grad::ParameterStore<T>& parameters() const noexcept { return store_; }

 private:
  struct Encoder {
    grad::DoubleConv<T> level1, level2;
  };
  struct ChannelDecoder {
    grad::UpConv<T> up;
    grad::DoubleConv<T> block;
    grad::Conv<T> head;
  };
  struct FusionDecoder {
    grad::DoubleConv<T> deep;
    grad::UpConv<T> up;
    grad::DoubleConv<T> block;
    grad::Conv<T> head;
  };

  grad::ParameterStore<T> store_;
  Encoder enc_g_, enc_s_;
  ChannelDecoder dec_g_, dec_s_;
  FusionDecoder fusion_;
};

extern template class DualEncoderNet<float>;
extern template class DualEncoderNet<double>;

}  // namespace flimzs::zsnet
