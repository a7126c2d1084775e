#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "flimzs/plane.hpp"

namespace flimzs::metrics {

// 10 log10(peak^2 / MSE); +inf when MSE == 0. Peak defaults to max(truth).
double psnr(const Plane& pred, const Plane& truth, std::optional<double> peak = std::nullopt);

// Mean SSIM over all fully contained window x window boxes, uniform
// weights, population statistics. Inputs are expected on a [0, 1] scale.
double ssim_metric(const Plane& pred, const Plane& truth, int window = 7, double c1 = 1e-4,
                   double c2 = 9e-4);

struct AleResult {
  double percent = 0.0;
  double coverage = 0.0;  // fraction of pixels in the mask
};

// Foreground-masked mean relative lifetime error in percent. A pixel counts
// when intensity_truth > threshold_frac * max(intensity_truth), tau_truth > 0
// and the prediction is valid (`pred_valid` may be empty: all valid).
// Throws EvaluationError on an empty mask.
AleResult ale(const Plane& tau_pred, std::span<const std::uint8_t> pred_valid,
              const Plane& tau_truth, const Plane& intensity_truth,
              double threshold_frac = 0.05);

struct MetricsReport {
  double psnr_g = 0.0, psnr_s = 0.0, psnr_mean = 0.0;
  double ssim_g = 0.0, ssim_s = 0.0, ssim_mean = 0.0;
  double ale_percent = 0.0;
  double mask_coverage = 0.0;
  double peak_g = 0.0, peak_s = 0.0;
};

struct EvalInputs {
  const Plane& pred_g;  // intensity-scaled phasor estimates
  const Plane& pred_s;
  const Plane& tau_pred;
  std::span<const std::uint8_t> tau_valid;
  const Plane& truth_g;  // g * I
  const Plane& truth_s;  // s * I
  const Plane& tau_truth;
  const Plane& intensity_truth;
};

// PSNR with peak = truth maximum; SSIM after dividing both images by the
// truth maximum.
MetricsReport evaluate(const EvalInputs& in, double ale_threshold = 0.05);

// CSV row schema shared by eval and ablate.
void write_report_header(std::ostream& os);
void write_report_row(std::ostream& os, const std::string& sample_id, const std::string& method,
                      const MetricsReport& r);
std::string format_number(double v);

}  // namespace flimzs::metrics
