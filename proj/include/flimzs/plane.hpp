#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace flimzs {

// Row-major single-channel image in 64-bit precision.
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), data(w * h, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  bool same_shape(const Plane& other) const noexcept {
    return width == other.width && height == other.height;
  }
  double& at(std::size_t x, std::size_t y) { return data[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return data[y * width + x]; }

  bool operator==(const Plane&) const = default;
};

// Linear-interpolated percentile (numpy's default method), q in [0, 100].
double percentile(std::span<const double> values, double q);

// Copy of the w x h window starting at (x0, y0).
Plane crop(const Plane& src, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

double mean(const Plane& p);
double max_value(const Plane& p);

}  // namespace flimzs
