#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flimzs::cli {

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitOptimization = 4,
  kExitEvaluation = 5,
  kExitGradCheck = 6,
};

// Ablation arm labels in row order.
const std::vector<std::string>& ablation_arm_names();

// `args` excludes the program name. Subcommands: synth, denoise, eval,
// ablate, gradcheck.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flimzs::cli
