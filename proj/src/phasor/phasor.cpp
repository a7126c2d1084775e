#include "flimzs/phasor/phasor.hpp"

#include <algorithm>
#include <cmath>

#include "flimzs/errors.hpp"
#include "flimzs/rng.hpp"

namespace flimzs::phasor {

PhasorPoint tau_to_phasor(double tau, double omega) {
  if (tau < 0.0) throw DomainError("negative lifetime " + std::to_string(tau));
  if (!(omega > 0.0)) throw ConfigError("omega must be positive");
  const double wt = omega * tau;
  const double denom = 1.0 + wt * wt;
  return {1.0 / denom, wt / denom};
}

Lifetime phasor_to_tau(double g, double s, double omega, double guard) {
  if (std::fabs(g) < guard || !(omega > 0.0)) return {0.0, false};
  return {s / (omega * g), true};
}

LifetimeMap lifetime_map(const Plane& g, const Plane& s, double omega, double guard) {
  if (!g.same_shape(s)) throw DimensionError("lifetime_map: g and s planes differ in shape");
  LifetimeMap out{Plane(g.width, g.height), std::vector<std::uint8_t>(g.size(), 0)};
  const double omega_ns = omega * kNanosecond;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Lifetime lt = phasor_to_tau(g.data[i], s.data[i], omega_ns, guard);
    out.tau_ns.data[i] = lt.tau;
    out.valid[i] = lt.valid ? 1 : 0;
  }
  return out;
}

void validate(const SceneSpec& spec) {
  if (spec.width == 0 || spec.height == 0) throw ConfigError("scene extents must be positive");
  if (!(spec.omega > 0.0)) throw ConfigError("scene omega must be positive");
  if (!(spec.background_tau > 0.0)) throw ConfigError("background tau must be positive");
  if (!(spec.background_intensity >= 0.0)) throw ConfigError("background intensity must be >= 0");
  const auto w = static_cast<double>(spec.width);
  const auto h = static_cast<double>(spec.height);
  for (std::size_t i = 0; i < spec.regions.size(); ++i) {
    const Region& r = spec.regions[i];
    const std::string tag = "region " + std::to_string(i);
    if (!(r.tau > 0.0)) throw ConfigError(tag + ": tau must be positive");
    if (!(r.intensity >= 0.0)) throw ConfigError(tag + ": intensity must be >= 0");
    if (r.shape == RegionShape::rectangle) {
      if (!(r.x0 >= 0 && r.y0 >= 0 && r.x1 <= w && r.y1 <= h && r.x0 < r.x1 && r.y0 < r.y1)) {
        throw ConfigError(tag + ": rectangle outside the image or empty");
      }
    } else {
      if (!(r.radius > 0 && r.cx - r.radius >= 0 && r.cy - r.radius >= 0 &&
            r.cx + r.radius <= w && r.cy + r.radius <= h)) {
        throw ConfigError(tag + ": disk outside the image or empty");
      }
    }
  }
}

namespace {
bool contains(const Region& r, double px, double py) {
  if (r.shape == RegionShape::rectangle) {
    return px >= r.x0 && px < r.x1 && py >= r.y0 && py < r.y1;
  }
  const double dx = px - r.cx, dy = py - r.cy;
  return dx * dx + dy * dy <= r.radius * r.radius;
}
}  // namespace

PhasorField synthesize_scene(const SceneSpec& spec) {
  validate(spec);
  PhasorField f;
  f.width = spec.width;
  f.height = spec.height;
  f.omega = spec.omega;
  f.tau = Plane(spec.width, spec.height, spec.background_tau);
  f.intensity = Plane(spec.width, spec.height, spec.background_intensity);
  for (const Region& r : spec.regions) {
    for (std::size_t y = 0; y < spec.height; ++y) {
      for (std::size_t x = 0; x < spec.width; ++x) {
        if (contains(r, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) {
          f.tau.at(x, y) = r.tau;
          f.intensity.at(x, y) = r.intensity;
        }
      }
    }
  }
  f.g = Plane(spec.width, spec.height);
  f.s = Plane(spec.width, spec.height);
  for (std::size_t i = 0; i < f.tau.size(); ++i) {
    const PhasorPoint p = tau_to_phasor(f.tau.data[i] * kNanosecond, spec.omega);
    f.g.data[i] = p.g;
    f.s.data[i] = p.s;
  }
  return f;
}

SceneSpec two_region_scene(std::size_t width, std::size_t height, double tau_bg, double tau_fg,
                           double intensity_bg, double intensity_fg, RegionShape shape) {
  SceneSpec spec;
  spec.width = width;
  spec.height = height;
  spec.background_tau = tau_bg;
  spec.background_intensity = intensity_bg;
  Region r;
  r.shape = shape;
  r.tau = tau_fg;
  r.intensity = intensity_fg;
  const auto w = static_cast<double>(width);
  const auto h = static_cast<double>(height);
  if (shape == RegionShape::disk) {
    r.cx = w / 2;
    r.cy = h / 2;
    r.radius = std::min(w, h) / 4;
  } else {
    r.x0 = w / 4;
    r.y0 = h / 4;
    r.x1 = 3 * w / 4;
    r.y1 = 3 * h / 4;
  }
  spec.regions.push_back(r);
  return spec;
}

std::string_view to_string(NoiseMode mode) {
  return mode == NoiseMode::photon_mc ? "photon_mc" : "additive";
}

NoiseMode parse_noise_mode(std::string_view text) {
  if (text == "photon_mc") return NoiseMode::photon_mc;
  if (text == "additive") return NoiseMode::additive;
  throw ConfigError("unknown noise mode '" + std::string(text) + "'");
}

NoisyAcquisition corrupt(const PhasorField& field, const NoiseParams& params) {
  if (!(params.photon_scale > 0.0)) throw ConfigError("photon_scale must be positive");
  if (params.sigma_g < 0 || params.sigma_s < 0 || params.sigma_i < 0) {
    throw ConfigError("noise sigmas must be >= 0");
  }
  NoisyAcquisition acq;
  acq.y_g = Plane(field.width, field.height);
  acq.y_s = Plane(field.width, field.height);
  acq.y_i = Plane(field.width, field.height);
  acq.omega = field.omega;
  acq.noise = params;

  const CounterRng root = CounterRng(params.seed).split("corrupt");
  for (std::size_t i = 0; i < field.intensity.size(); ++i) {
    const CounterRng pixel = root.split(static_cast<std::uint64_t>(i));
    CounterRng photons = pixel.split("photons");
    CounterRng read = pixel.split("read");
    const double intensity = field.intensity.data[i];
    const std::uint64_t n = photons.poisson(intensity * params.photon_scale);
    const double shot = static_cast<double>(n) / params.photon_scale;
    if (params.mode == NoiseMode::photon_mc) {
      const double tau_s = field.tau.data[i] * kNanosecond;
      double sum_cos = 0.0, sum_sin = 0.0;
      for (std::uint64_t k = 0; k < n; ++k) {
        const double phase = field.omega * photons.exponential(tau_s);
        sum_cos += std::cos(phase);
        sum_sin += std::sin(phase);
      }
      const double g_hat = n > 0 ? sum_cos / static_cast<double>(n) : 0.0;
      const double s_hat = n > 0 ? sum_sin / static_cast<double>(n) : 0.0;
      acq.y_g.data[i] = g_hat * shot + params.sigma_g * read.normal();
      acq.y_s.data[i] = s_hat * shot + params.sigma_s * read.normal();
    } else {
      acq.y_g.data[i] = field.g.data[i] * intensity + params.sigma_g * read.normal();
      acq.y_s.data[i] = field.s.data[i] * intensity + params.sigma_s * read.normal();
    }
    acq.y_i.data[i] = shot + params.sigma_i * read.normal();
  }
  return acq;
}

namespace {
std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
}  // namespace

RgbImage render_lifetime(const Plane& tau_ns, const Plane& intensity, double tau_min,
                         double tau_max) {
  if (!(tau_max > tau_min)) throw ConfigError("render_lifetime: tau_max must exceed tau_min");
  if (!tau_ns.same_shape(intensity)) {
    throw DimensionError("render_lifetime: lifetime and intensity planes differ in shape");
  }
  const double peak = intensity.size() ? percentile(intensity.data, 99.9) : 0.0;
  RgbImage img{tau_ns.width, tau_ns.height, std::vector<std::uint8_t>(3 * tau_ns.size())};
  for (std::size_t i = 0; i < tau_ns.size(); ++i) {
    const double frac = std::clamp((tau_ns.data[i] - tau_min) / (tau_max - tau_min), 0.0, 1.0);
    const double hue = 240.0 * (1.0 - frac);
    const double value = peak > 0.0 ? std::clamp(intensity.data[i] / peak, 0.0, 1.0) : 0.0;
    // HSV -> RGB with S = 1.
    const double hp = hue / 60.0;
    const double x = value * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (std::min(static_cast<int>(hp), 5)) {
      case 0: r = value; g = x; break;
      case 1: r = x; g = value; break;
      case 2: g = value; b = x; break;
      case 3: g = x; b = value; break;
      case 4: r = x; b = value; break;
      default: r = value; b = x; break;
    }
    img.rgb[3 * i] = to_byte(r);
    img.rgb[3 * i + 1] = to_byte(g);
    img.rgb[3 * i + 2] = to_byte(b);
  }
  return img;
}

}  // namespace flimzs::phasor
