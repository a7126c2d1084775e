#include "flimzs/plane.hpp"

#include <algorithm>
#include <cmath>

#include "flimzs/errors.hpp"

namespace flimzs {

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw DimensionError("percentile of an empty set");
  if (q < 0.0 || q > 100.0) throw ConfigError("percentile outside [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

Plane crop(const Plane& src, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > src.width || y0 + h > src.height) {
    throw DimensionError("crop window exceeds image bounds");
  }
  Plane out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>((y0 + y) * src.width + x0), w,
                out.data.begin() + static_cast<std::ptrdiff_t>(y * w));
  }
  return out;
}

double mean(const Plane& p) {
  if (p.data.empty()) return 0.0;
  double acc = 0.0;
  for (double v : p.data) acc += v;
  return acc / static_cast<double>(p.data.size());
}

double max_value(const Plane& p) {
  if (p.data.empty()) throw DimensionError("max of an empty plane");
  return *std::max_element(p.data.begin(), p.data.end());
}

}  // namespace flimzs
