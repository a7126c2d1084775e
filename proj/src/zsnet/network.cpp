#include "flimzs/zsnet/network.hpp"

#include "flimzs/errors.hpp"

namespace flimzs::zsnet {

using grad::Activation;
using grad::concat_channels;
using grad::Conv;
using grad::DoubleConv;
using grad::Tensor;
using grad::UpConv;

template <typename T>
DualEncoderNet<T>::DualEncoderNet(std::uint64_t seed, std::size_t w) {
  const CounterRng rng = CounterRng(seed).split("dual_encoder");
  const Activation relu = Activation::relu();
  auto encoder = [&](const std::string& name) {
    return Encoder{DoubleConv<T>(store_, name + ".level1", 1, w, true, relu, rng),
                   DoubleConv<T>(store_, name + ".level2", w, 2 * w, true, relu, rng)};
  };
  auto decoder = [&](const std::string& name) {
    return ChannelDecoder{UpConv<T>(store_, name + ".up", 2 * w, w, rng),
                          DoubleConv<T>(store_, name + ".block", 2 * w, w, true, relu, rng),
                          Conv<T>(store_, name + ".head", w, 1, 1, rng)};
  };
  enc_g_ = encoder("enc_g");
  enc_s_ = encoder("enc_s");
  dec_g_ = decoder("dec_g");
  dec_s_ = decoder("dec_s");
  fusion_ = FusionDecoder{DoubleConv<T>(store_, "fusion.deep", 4 * w, 2 * w, true, relu, rng),
                          UpConv<T>(store_, "fusion.up", 2 * w, w, rng),
                          DoubleConv<T>(store_, "fusion.block", 3 * w, w, true, relu, rng),
                          Conv<T>(store_, "fusion.head", w, 1, 1, rng)};
}

template <typename T>
NetOutputs<T> DualEncoderNet<T>::forward(const Tensor<T>& y_g, const Tensor<T>& y_s) const {
  const auto& sh = y_g.shape();
  if (!(sh == y_s.shape())) {
    throw DimensionError("dual-encoder inputs differ in shape: " + sh.str() + " vs " +
                         y_s.shape().str());
  }
  if (sh.c != 1 || sh.h % 2 != 0 || sh.w % 2 != 0) {
    throw DimensionError("dual-encoder inputs must be single-channel with even extents, got " +
                         sh.str());
  }
  const Tensor<T> g1 = enc_g_.level1(y_g);
  const Tensor<T> g2 = enc_g_.level2(grad::maxpool2x2(g1));
  const Tensor<T> s1 = enc_s_.level1(y_s);
  const Tensor<T> s2 = enc_s_.level2(grad::maxpool2x2(s1));

  auto decode = [](const ChannelDecoder& d, const Tensor<T>& deep, const Tensor<T>& skip) {
    return d.head(d.block(concat_channels(d.up(deep), skip)));
  };
  NetOutputs<T> out;
  out.g = decode(dec_g_, g2, g1);
  out.s = decode(dec_s_, s2, s1);

  const Tensor<T> fused = fusion_.deep(concat_channels(g2, s2));
  const Tensor<T> skips = concat_channels(concat_channels(fusion_.up(fused), g1), s1);
  out.i = fusion_.head(fusion_.block(skips));
  return out;
}

template class DualEncoderNet<float>;
template class DualEncoderNet<double>;

}  // namespace flimzs::zsnet
