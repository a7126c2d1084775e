#include "flimzs/prior/prior.hpp"

#include <algorithm>
#include <cmath>

#include "flimzs/errors.hpp"
#include "flimzs/gradcore/adam.hpp"
#include "flimzs/gradcore/ops.hpp"
#include "flimzs/prior/unet.hpp"

namespace flimzs::prior {

using grad::Shape;
using grad::Tensor;

std::string_view to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::passthrough: return "passthrough";
    case PriorKind::gaussian: return "gaussian";
    case PriorKind::median: return "median";
    case PriorKind::selfsup: return "selfsup";
  }
  return "?";
}

PriorKind parse_prior_kind(std::string_view text) {
  for (PriorKind k : {PriorKind::passthrough, PriorKind::gaussian, PriorKind::median,
                      PriorKind::selfsup}) {
    if (text == to_string(k)) return k;
  }
  throw ConfigError("unknown prior kind '" + std::string(text) + "'");
}

void validate(const PriorConfig& c) {
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("prior alpha must lie in [0, 1]");
  if (c.iterations < 1) throw ConfigError("prior iterations must be >= 1");
  if (!(c.mask_fraction > 0.0 && c.mask_fraction <= 0.5)) {
    throw ConfigError("prior mask fraction must lie in (0, 0.5]");
  }
  if (!(c.learning_rate > 0.0)) throw ConfigError("prior learning rate must be positive");
  if (!(c.gaussian_sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  if (c.median_radius < 0) throw ConfigError("median radius must be >= 0");
  if (c.base_channels < 1) throw ConfigError("prior base channels must be >= 1");
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

Plane gaussian_filter(const Plane& image, double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    norm += v;
  }
  for (double& v : kernel) v /= norm;

  Plane tmp(image.width, image.height), out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               image.at(reflect_index(static_cast<std::ptrdiff_t>(x) + k, image.width), y);
      }
      tmp.at(x, y) = acc;
    }
  }
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               tmp.at(x, reflect_index(static_cast<std::ptrdiff_t>(y) + k, image.height));
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

Plane median_filter(const Plane& image, int radius) {
  Plane out(image.width, image.height);
  std::vector<double> window;
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      window.clear();
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          window.push_back(
              image.at(reflect_index(static_cast<std::ptrdiff_t>(x) + dx, image.width),
                       reflect_index(static_cast<std::ptrdiff_t>(y) + dy, image.height)));
        }
      }
      const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out.at(x, y) = *mid;
    }
  }
  return out;
}

BlindSpotBatch make_blind_spot_batch(const Plane& image, double fraction, CounterRng& rng) {
  const std::size_t pixels = image.size();
  const auto wanted = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(pixels)));
  const std::size_t count = std::clamp<std::size_t>(wanted, 1, pixels);
  BlindSpotBatch batch{image, std::vector<std::uint8_t>(pixels, 0)};
  std::size_t chosen = 0;
  while (chosen < count) {
    const std::size_t idx = rng.below(pixels);
    if (batch.mask[idx]) continue;
    batch.mask[idx] = 1;
    ++chosen;
    const auto x = static_cast<std::ptrdiff_t>(idx % image.width);
    const auto y = static_cast<std::ptrdiff_t>(idx / image.width);
    std::ptrdiff_t dx = 0, dy = 0;
    while (dx == 0 && dy == 0) {
      dx = static_cast<std::ptrdiff_t>(rng.below(5)) - 2;
      dy = static_cast<std::ptrdiff_t>(rng.below(5)) - 2;
    }
    // Read from the original image so earlier replacements do not leak.
    batch.input.data[idx] = image.at(reflect_index(x + dx, image.width),
                                     reflect_index(y + dy, image.height));
  }
  return batch;
}

namespace {

Plane pad_reflect(const Plane& src, std::size_t w, std::size_t h) {
  Plane out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out.at(x, y) = src.at(reflect_index(static_cast<std::ptrdiff_t>(x), src.width),
                            reflect_index(static_cast<std::ptrdiff_t>(y), src.height));
    }
  }
  return out;
}

Tensor<float> to_tensor(const Plane& p, double scale) {
  std::vector<float> v(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) v[i] = static_cast<float>(p.data[i] / scale);
  return Tensor<float>::from_values(Shape{1, 1, p.height, p.width}, std::move(v));
}

double normalization_scale(const Plane& p) {
  const double s = percentile(p.data, 99.9);
  return s > 0.0 ? s : 1.0;
}

}  // namespace

PriorResult train_selfsup_prior(const Plane& y_i, const Plane* clean, const PriorConfig& config) {
  validate(config);
  if (y_i.width < 32 || y_i.height < 32) {
    throw DimensionError("selfsup prior needs an image of at least 32x32");
  }
  if (config.alpha < 1.0 && clean == nullptr) {
    throw ConfigError("selfsup prior with alpha < 1 requires a clean reference");
  }
  if (clean != nullptr && !clean->same_shape(y_i)) {
    throw DimensionError("clean reference shape differs from the noisy intensity");
  }

  const std::size_t pw = (y_i.width + 7) / 8 * 8;
  const std::size_t ph = (y_i.height + 7) / 8 * 8;
  const Plane noisy = pad_reflect(y_i, pw, ph);
  const double scale = normalization_scale(y_i);
  const bool use_blind_spot = config.alpha > 0.0;
  const bool use_supervised = config.alpha < 1.0;
  const Tensor<float> target = to_tensor(noisy, scale);
  const Tensor<float> clean_t =
      use_supervised ? to_tensor(pad_reflect(*clean, pw, ph), scale) : Tensor<float>();
  const Tensor<float> full_input = target;

  UNet<float> net(config.seed, config.base_channels);
  auto& params = net.parameters().params();
  grad::AdamState<float> adam;
  adam.options.lr = config.learning_rate;
  const CounterRng rng = CounterRng(config.seed).split("blind_spot");

  PriorResult result;
  result.config = config;
  for (int it = 0; it < config.iterations; ++it) {
    try {
      Tensor<float> input = full_input;
      std::vector<std::uint8_t> mask;
      if (use_blind_spot) {
        CounterRng stream = rng.split(static_cast<std::uint64_t>(it));
        BlindSpotBatch batch = make_blind_spot_batch(noisy, config.mask_fraction, stream);
        input = to_tensor(batch.input, scale);
        mask = std::move(batch.mask);
      }
      const Tensor<float> pred = net.forward(input);
      PriorTraceRow row;
      Tensor<float> loss;
      if (use_blind_spot) {
        const Tensor<float> n2v = grad::masked_mse(pred, target, mask);
        row.blind_spot = n2v.item();
        loss = grad::scale(n2v, config.alpha);
      }
      if (use_supervised) {
        const Tensor<float> sup = grad::mse(pred, clean_t);
        row.supervised = sup.item();
        const Tensor<float> weighted = grad::scale(sup, 1.0 - config.alpha);
        loss = loss.defined() ? grad::add(loss, weighted) : weighted;
      }
      row.total = loss.item();
      net.parameters().zero_grad();
      loss.backward();
      grad::adam_step<float>(params, adam);
      result.trace.push_back(row);
    } catch (const NumericError& e) {
      throw NumericError(e.op(), "prior training diverged at iteration " + std::to_string(it) +
                                     ": " + e.what());
    }
  }

  const Tensor<float> out = net.forward(full_input);
  result.intensity = Plane(y_i.width, y_i.height);
  for (std::size_t y = 0; y < y_i.height; ++y) {
    for (std::size_t x = 0; x < y_i.width; ++x) {
      result.intensity.at(x, y) = static_cast<double>(out.values()[y * pw + x]) * scale;
    }
  }
  return result;
}

PriorResult denoise_intensity(const Plane& y_i, const PriorConfig& config, const Plane* clean) {
  validate(config);
  for (double v : y_i.data) {
    if (!std::isfinite(v)) throw ConfigError("noisy intensity contains non-finite values");
  }
  switch (config.kind) {
    case PriorKind::passthrough: return {y_i, {}, config};
    case PriorKind::gaussian: return {gaussian_filter(y_i, config.gaussian_sigma), {}, config};
    case PriorKind::median: return {median_filter(y_i, config.median_radius), {}, config};
    case PriorKind::selfsup: return train_selfsup_prior(y_i, clean, config);
  }
  throw ConfigError("unhandled prior kind");
}

}  // namespace flimzs::prior
