#pragma once

#include <filesystem>
#include <string>

#include "flimzs/phasor/phasor.hpp"

namespace flimzs::cli {

// Binary P6, maxval 255.
std::string encode_ppm(const phasor::RgbImage& image);
void write_ppm(const std::filesystem::path& path, const phasor::RgbImage& image);

}  // namespace flimzs::cli
