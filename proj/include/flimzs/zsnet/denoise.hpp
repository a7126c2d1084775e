#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "flimzs/phasor/phasor.hpp"
#include "flimzs/prior/prior.hpp"
#include "flimzs/zsnet/loss.hpp"

namespace flimzs::zsnet {

struct ZeroShotConfig {
  int iterations = 1000;
  std::size_t patch = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  double plateau_factor = 0.5;
  int plateau_patience = 50;
  double min_learning_rate = 1e-5;
  std::uint64_t seed = 0;
  LossWeights weights;
  double norm_percentile = 99.9;
};

void validate(const ZeroShotConfig& config);

struct TraceRow {
  int iteration = 0;
  double lr = 0.0;
  double total = 0.0;
  LossComponents components;
};

// Per-channel normalization divisors recorded before optimization.
struct ChannelScales {
  double g = 1.0;
  double s = 1.0;
  double i = 1.0;      // noisy intensity
  double prior = 1.0;  // prior intensity; also de-normalizes y_I_hat
};

struct DenoiseResult {
  Plane y_g;
  Plane y_s;
  Plane y_i;
  phasor::LifetimeMap lifetime;  // ns, from y_s / (omega * y_g)
  std::vector<TraceRow> trace;
  ZeroShotConfig config;
  ChannelScales scales;
  double wall_seconds = 0.0;
};

using ProgressFn = std::function<void(const TraceRow&)>;

// Test-time optimization of a freshly initialized dual-encoder network on a
// single acquisition: random patch per iteration, composite loss, Adam with
// decoupled weight decay and a plateau learning-rate schedule; then a single
// full-image pass, de-normalization and lifetime extraction.
DenoiseResult zero_shot_denoise(const phasor::NoisyAcquisition& acq,
                                const prior::PriorResult& prior, const ZeroShotConfig& config,
                                const ProgressFn& progress = {});

// Header: iteration,lr,total,intensity,fidelity,structure,tv
void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

}  // namespace flimzs::zsnet
