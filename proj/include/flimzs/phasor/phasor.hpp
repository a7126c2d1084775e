#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "flimzs/plane.hpp"

// Fluorescence-lifetime phasor physics: lifetime <-> phasor conversion,
// synthetic ground-truth scenes and photon-level noise simulation.
//
// Unit convention: the scalar conversions are unit-agnostic (tau and omega
// only enter through their product). Fields store tau in nanoseconds and
// omega in rad/s.
namespace flimzs::phasor {

inline constexpr double kNanosecond = 1e-9;
inline constexpr double kDefaultOmega = 2.0 * std::numbers::pi * 80e6;
inline constexpr double kDefaultDivisionGuard = 1e-6;

struct PhasorPoint {
  double g = 0.0;
  double s = 0.0;
};

struct Lifetime {
  double tau = 0.0;
  bool valid = false;
};

// g = 1 / (1 + (w t)^2), s = w t / (1 + (w t)^2). Throws DomainError for
// tau < 0 and ConfigError for omega <= 0.
PhasorPoint tau_to_phasor(double tau, double omega);

// tau = s / (omega * g); pixels with |g| < guard are invalid with tau = 0.
Lifetime phasor_to_tau(double g, double s, double omega, double guard = kDefaultDivisionGuard);

struct LifetimeMap {
  Plane tau_ns;
  std::vector<std::uint8_t> valid;
};

// Per-pixel lifetime (ns) from intensity-scaled or plain phasor planes.
// The intensity factor cancels in the ratio.
LifetimeMap lifetime_map(const Plane& g, const Plane& s, double omega,
                         double guard = kDefaultDivisionGuard);

struct PhasorField {
  std::size_t width = 0;
  std::size_t height = 0;
  double omega = kDefaultOmega;
  Plane tau;        // ns
  Plane intensity;  // clean I >= 0
  Plane g;
  Plane s;
};

enum class RegionShape { rectangle, disk };

struct Region {
  RegionShape shape = RegionShape::disk;
  // Rectangle: pixel bounds [x0, x1) x [y0, y1).
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  // Disk: a pixel belongs to it when its center lies within radius.
  double cx = 0, cy = 0, radius = 0;
  double tau = 1.0;
  double intensity = 1.0;
};

struct SceneSpec {
  std::size_t width = 64;
  std::size_t height = 64;
  std::vector<Region> regions;  // painted in order, later ones on top
  double background_tau = 1.0;
  double background_intensity = 0.5;
  double omega = kDefaultOmega;
};

// Throws ConfigError describing the first violated constraint.
void validate(const SceneSpec& spec);
PhasorField synthesize_scene(const SceneSpec& spec);

// Centered disk (radius = min extent / 4) or rectangle (half extents) on a
// uniform background.
SceneSpec two_region_scene(std::size_t width, std::size_t height, double tau_bg, double tau_fg,
                           double intensity_bg, double intensity_fg, RegionShape shape);

enum class NoiseMode { photon_mc, additive };

std::string_view to_string(NoiseMode mode);
NoiseMode parse_noise_mode(std::string_view text);

struct NoiseParams {
  NoiseMode mode = NoiseMode::photon_mc;
  double photon_scale = 20.0;  // expected photons per unit intensity
  double sigma_g = 0.02;
  double sigma_s = 0.02;
  double sigma_i = 0.02;
  std::uint64_t seed = 0;
};

struct NoisyAcquisition {
  Plane y_g;
  Plane y_s;
  Plane y_i;
  double omega = kDefaultOmega;
  NoiseParams noise;
};

// photon_mc: N ~ Poisson(I * scale) photons per pixel with exponential
// arrival times of mean tau; the empirical phasor of those arrivals scales
// the shot-noise intensity N / scale, so all three channels share the same
// photon draw. additive: y_g = g I + n_g, y_s = s I + n_s,
// y_I = Poisson(I scale) / scale + n_I. Gaussian read noise is added in
// both modes. Every pixel owns a random stream derived from (seed, index).
NoisyAcquisition corrupt(const PhasorField& field, const NoiseParams& params);

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major
};

// Hue 240 deg (tau_min) to 0 deg (tau_max), full saturation, value from the
// intensity divided by its 99.9th percentile.
RgbImage render_lifetime(const Plane& tau_ns, const Plane& intensity, double tau_min,
                         double tau_max);

}  // namespace flimzs::phasor
