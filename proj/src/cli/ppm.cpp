#include "flimzs/cli/ppm.hpp"

#include "flimzs/cli/fph.hpp"

namespace flimzs::cli {

std::string encode_ppm(const phasor::RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return out;
}

void write_ppm(const std::filesystem::path& path, const phasor::RgbImage& image) {
  write_file_atomic(path, encode_ppm(image));
}

}  // namespace flimzs::cli
