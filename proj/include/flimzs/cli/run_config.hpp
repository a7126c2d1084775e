#pragma once

#include <string>
#include <string_view>

#include "flimzs/phasor/phasor.hpp"
#include "flimzs/prior/prior.hpp"
#include "flimzs/zsnet/denoise.hpp"

// Flat key=value experiment configuration. Blank lines and lines starting
// with '#' are ignored; unknown keys are rejected. Regions are written as
//   scene.region.<index> = disk <cx> <cy> <radius> <tau> <intensity>
//   scene.region.<index> = rect <x0> <y0> <x1> <y1> <tau> <intensity>
namespace flimzs::cli {

struct RunConfig {
  phasor::SceneSpec scene;
  phasor::NoiseParams noise;
  prior::PriorConfig prior;
  zsnet::ZeroShotConfig zero_shot;
};

// Applies the assignments in `text` on top of `base`. ConfigError names the
// offending line.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
std::string serialize_run_config(const RunConfig& config);

}  // namespace flimzs::cli
