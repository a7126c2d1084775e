#pragma once

#include <optional>
#include <string>
#include <vector>

namespace flimzs::cli {

inline constexpr double kGradCheckTolerance = 1e-5;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  bool passed = false;
};

// Names accepted by run_gradcheck_suite's filter, in execution order.
const std::vector<std::string>& gradcheck_names();

// Central-difference checks in 64-bit mode, one per differentiable op plus
// the full network under the composite loss. Each check perturbs every
// input and parameter of its graph at a seeded random point.
std::vector<GradCheckEntry> run_gradcheck_suite(const std::optional<std::string>& only,
                                                double h = 1e-4);

}  // namespace flimzs::cli
