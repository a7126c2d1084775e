#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flimzs/plane.hpp"
#include "flimzs/rng.hpp"

// Intensity prior: produces the denoised intensity image that anchors the
// intensity term of the zero-shot loss.
namespace flimzs::prior {

enum class PriorKind { passthrough, gaussian, median, selfsup };

std::string_view to_string(PriorKind kind);
PriorKind parse_prior_kind(std::string_view text);

struct PriorConfig {
  PriorKind kind = PriorKind::selfsup;
  double gaussian_sigma = 1.0;
  int median_radius = 1;
  // selfsup: loss = alpha * blind-spot loss + (1 - alpha) * supervised MSE.
  double alpha = 0.5;
  int iterations = 500;
  double mask_fraction = 0.03;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t base_channels = 32;
};

// Throws ConfigError on out-of-range fields.
void validate(const PriorConfig& config);

struct PriorTraceRow {
  double total = 0.0;
  double blind_spot = 0.0;  // masked-position MSE, 0 when alpha == 0
  double supervised = 0.0;  // MSE against the clean reference, 0 when alpha == 1
};

struct PriorResult {
  Plane intensity;
  std::vector<PriorTraceRow> trace;
  PriorConfig config;
};

// Dispatches on config.kind. `clean` is the optional noise-free reference
// required by selfsup when alpha < 1.
PriorResult denoise_intensity(const Plane& y_i, const PriorConfig& config,
                              const Plane* clean = nullptr);

// Per-image blind-spot training of the U-Net prior. Images must be at least
// 32x32; extents that are not multiples of 8 are reflect-padded.
PriorResult train_selfsup_prior(const Plane& y_i, const Plane* clean, const PriorConfig& config);

// One blind-spot batch: round(fraction * pixels) distinct positions (at
// least one) whose input values are replaced by a uniformly chosen other
// pixel from the surrounding 5x5 window (reflected at borders).
struct BlindSpotBatch {
  Plane input;
  std::vector<std::uint8_t> mask;
};

BlindSpotBatch make_blind_spot_batch(const Plane& image, double fraction, CounterRng& rng);

Plane gaussian_filter(const Plane& image, double sigma);
Plane median_filter(const Plane& image, int radius);

// Mirror index without edge repetition: -1 -> 1, n -> n - 2.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

}  // namespace flimzs::prior
