#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "flimzs/plane.hpp"

// FPH1: little-endian container for phasor image planes.
//
//   offset  size  field
//   0       4     magic "FPH1"
//   4       2     version (u16) = 1
//   6       4     width (u32)
//   10      4     height (u32)
//   14      8     omega, rad/s (f64)
//   22      2     plane count (u16)
//   then per plane: 16-byte space-padded name, width*height f32 row-major
//
// Plane names are drawn from {g, s, I, tau, y_g, y_s, y_I} and are unique.
namespace flimzs::cli {

inline constexpr std::uint16_t kFphVersion = 1;

struct FphPlane {
  std::string name;
  std::vector<float> data;
};

struct FphContainer {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  double omega = 0.0;
  std::vector<FphPlane> planes;

  const FphPlane* find(std::string_view name) const;
  void add(std::string name, const Plane& plane);
  // Throws IoError naming the plane when it is absent.
  Plane plane(std::string_view name) const;
};

bool is_known_plane_name(std::string_view name);

std::string encode_fph(const FphContainer& c);
// Validates magic, version, names and exact payload length; IoError on any
// violation.
FphContainer decode_fph(std::string_view bytes);

// Atomic write: temporary file in the destination directory, then rename.
void write_fph(const std::filesystem::path& path, const FphContainer& c);
FphContainer read_fph(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace flimzs::cli
