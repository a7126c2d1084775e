#include "flimzs/zsnet/denoise.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "flimzs/errors.hpp"
#include "flimzs/gradcore/adam.hpp"

namespace flimzs::zsnet {

using grad::Shape;
using grad::Tensor;

void validate(const ZeroShotConfig& c) {
  if (c.iterations < 1) throw ConfigError("iterations must be >= 1");
  if (c.patch < 8 || c.patch % 2 != 0) throw ConfigError("patch must be even and >= 8");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (c.weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (!(c.min_learning_rate > 0.0)) throw ConfigError("min learning rate must be positive");
  if (!(c.norm_percentile > 0.0 && c.norm_percentile <= 100.0)) {
    throw ConfigError("normalization percentile must lie in (0, 100]");
  }
  validate(c.weights);
}

namespace {

double channel_scale(const Plane& p, double q) {
  const double s = percentile(p.data, q);
  return s > 0.0 ? s : 1.0;
}

Tensor<float> patch_tensor(const Plane& p, double scale, std::size_t x0, std::size_t y0,
                           std::size_t w, std::size_t h) {
  std::vector<float> v(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      v[y * w + x] = static_cast<float>(p.at(x0 + x, y0 + y) / scale);
    }
  }
  return Tensor<float>::from_values(Shape{1, 1, h, w}, std::move(v));
}

Plane to_plane(const Tensor<float>& t, double scale) {
  Plane p(t.shape().w, t.shape().h);
  for (std::size_t i = 0; i < p.size(); ++i) p.data[i] = static_cast<double>(t.values()[i]) * scale;
  return p;
}

void require_finite(const Plane& p, const char* name) {
  for (double v : p.data) {
    if (!std::isfinite(v)) throw ConfigError(std::string(name) + " contains non-finite values");
  }
}

}  // namespace

DenoiseResult zero_shot_denoise(const phasor::NoisyAcquisition& acq,
                                const prior::PriorResult& prior, const ZeroShotConfig& config,
                                const ProgressFn& progress) {
  const auto start = std::chrono::steady_clock::now();
  validate(config);
  const std::size_t w = acq.y_g.width, h = acq.y_g.height;
  if (!acq.y_s.same_shape(acq.y_g) || !acq.y_i.same_shape(acq.y_g) ||
      !prior.intensity.same_shape(acq.y_g)) {
    throw DimensionError("acquisition planes and prior must share one shape");
  }
  if (config.patch > w || config.patch > h) {
    throw ConfigError("patch " + std::to_string(config.patch) + " larger than image " +
                      std::to_string(w) + "x" + std::to_string(h));
  }
  if (w % 2 != 0 || h % 2 != 0) throw DimensionError("image extents must be even");
  require_finite(acq.y_g, "y_g");
  require_finite(acq.y_s, "y_s");
  require_finite(acq.y_i, "y_I");
  require_finite(prior.intensity, "prior intensity");

  DenoiseResult result;
  result.config = config;
  const double q = config.norm_percentile;
  result.scales = {channel_scale(acq.y_g, q), channel_scale(acq.y_s, q),
                   channel_scale(acq.y_i, q), channel_scale(prior.intensity, q)};
  const ChannelScales& sc = result.scales;

  DualEncoderNet<float> net(config.seed);
  auto& params = net.parameters().params();
  grad::AdamState<float> adam;
  adam.options.lr = config.learning_rate;
  adam.options.weight_decay = config.weight_decay;
  grad::PlateauScheduler scheduler(config.plateau_factor, config.plateau_patience,
                                   config.min_learning_rate);
  CounterRng patches = CounterRng(config.seed).split("patches");

  const std::size_t p = config.patch;
  result.trace.reserve(static_cast<std::size_t>(config.iterations));
  for (int it = 0; it < config.iterations; ++it) {
    const std::size_t x0 = patches.below(w - p + 1);
    const std::size_t y0 = patches.below(h - p + 1);
    const Tensor<float> yg = patch_tensor(acq.y_g, sc.g, x0, y0, p, p);
    const Tensor<float> ys = patch_tensor(acq.y_s, sc.s, x0, y0, p, p);
    const Tensor<float> pi = patch_tensor(prior.intensity, sc.prior, x0, y0, p, p);
    TraceRow row;
    row.iteration = it;
    row.lr = adam.options.lr;
    try {
      const NetOutputs<float> out = net.forward(yg, ys);
      const CompositeLoss<float> loss = composite_loss(out, yg, ys, pi, config.weights);
      row.total = loss.total.item();
      row.components = loss.components;
      net.parameters().zero_grad();
      loss.total.backward();
      grad::adam_step<float>(params, adam);
    } catch (const NumericError& e) {
      throw NumericError(e.op(), "non-finite loss at iteration " + std::to_string(it) + " (" +
                                     e.what() + ")");
    }
    adam.options.lr = scheduler.step(row.total, adam.options.lr);
    result.trace.push_back(row);
    if (progress) progress(row);
  }

  const NetOutputs<float> full = net.forward(patch_tensor(acq.y_g, sc.g, 0, 0, w, h),
                                             patch_tensor(acq.y_s, sc.s, 0, 0, w, h));
  result.y_g = to_plane(full.g, sc.g);
  result.y_s = to_plane(full.s, sc.s);
  result.y_i = to_plane(full.i, sc.prior);
  result.lifetime = phasor::lifetime_map(result.y_g, result.y_s, acq.omega);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "iteration,lr,total,intensity,fidelity,structure,tv\n";
  const auto old = os.precision(9);
  for (const auto& r : trace) {
    os << r.iteration << ',' << r.lr << ',' << r.total << ',' << r.components.intensity << ','
       << r.components.fidelity << ',' << r.components.structure << ',' << r.components.tv
       << '\n';
  }
  os.precision(old);
}

}  // namespace flimzs::zsnet
