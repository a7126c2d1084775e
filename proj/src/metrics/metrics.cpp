#include "flimzs/metrics/metrics.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include "flimzs/errors.hpp"

namespace flimzs::metrics {

namespace {
void require_same(const Plane& a, const Plane& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": image shapes differ");
}
}  // namespace

double psnr(const Plane& pred, const Plane& truth, std::optional<double> peak) {
  require_same(pred, truth, "psnr");
  if (truth.size() == 0) throw DimensionError("psnr: empty images");
  const double pk = peak ? *peak : max_value(truth);
  if (!(pk > 0.0)) throw EvaluationError("psnr: peak must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - truth.data[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(pred.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(pk * pk / mse);
}

double ssim_metric(const Plane& pred, const Plane& truth, int window, double c1, double c2) {
  require_same(pred, truth, "ssim");
  if (window < 1 || window % 2 == 0) throw ConfigError("ssim: window must be odd");
  const auto win = static_cast<std::size_t>(window);
  if (pred.width < win || pred.height < win) {
    throw DimensionError("ssim: image smaller than the window");
  }
  const double n = static_cast<double>(win * win);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + win <= pred.height; ++y) {
    for (std::size_t x = 0; x + win <= pred.width; ++x) {
      double ma = 0, mb = 0;
      for (std::size_t v = 0; v < win; ++v) {
        for (std::size_t u = 0; u < win; ++u) {
          ma += pred.at(x + u, y + v);
          mb += truth.at(x + u, y + v);
        }
      }
      ma /= n;
      mb /= n;
      double va = 0, vb = 0, cov = 0;
      for (std::size_t v = 0; v < win; ++v) {
        for (std::size_t u = 0; u < win; ++u) {
          const double da = pred.at(x + u, y + v) - ma;
          const double db = truth.at(x + u, y + v) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      }
      va /= n;
      vb /= n;
      cov /= n;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

AleResult ale(const Plane& tau_pred, std::span<const std::uint8_t> pred_valid,
              const Plane& tau_truth, const Plane& intensity_truth, double threshold_frac) {
  require_same(tau_pred, tau_truth, "ale");
  require_same(tau_pred, intensity_truth, "ale");
  if (!pred_valid.empty() && pred_valid.size() != tau_pred.size()) {
    throw DimensionError("ale: validity mask length differs from the image");
  }
  if (!(threshold_frac >= 0.0 && threshold_frac < 1.0)) {
    throw ConfigError("ale: threshold fraction must lie in [0, 1)");
  }
  if (tau_pred.size() == 0) throw EvaluationError("ale: empty images");
  const double cut = threshold_frac * max_value(intensity_truth);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < tau_pred.size(); ++i) {
    const bool valid = pred_valid.empty() || pred_valid[i] != 0;
    if (!(intensity_truth.data[i] > cut) || !(tau_truth.data[i] > 0.0) || !valid) continue;
    acc += std::fabs(tau_pred.data[i] - tau_truth.data[i]) / tau_truth.data[i];
    ++count;
  }
  if (count == 0) throw EvaluationError("ale: lifetime mask is empty");
  return {100.0 * acc / static_cast<double>(count),
          static_cast<double>(count) / static_cast<double>(tau_pred.size())};
}

namespace {
Plane scaled(const Plane& p, double divisor) {
  Plane out = p;
  for (double& v : out.data) v /= divisor;
  return out;
}
}  // namespace

MetricsReport evaluate(const EvalInputs& in, double ale_threshold) {
  MetricsReport r;
  r.peak_g = max_value(in.truth_g);
  r.peak_s = max_value(in.truth_s);
  r.psnr_g = psnr(in.pred_g, in.truth_g, r.peak_g);
  r.psnr_s = psnr(in.pred_s, in.truth_s, r.peak_s);
  r.psnr_mean = 0.5 * (r.psnr_g + r.psnr_s);
  r.ssim_g = ssim_metric(scaled(in.pred_g, r.peak_g), scaled(in.truth_g, r.peak_g));
  r.ssim_s = ssim_metric(scaled(in.pred_s, r.peak_s), scaled(in.truth_s, r.peak_s));
  r.ssim_mean = 0.5 * (r.ssim_g + r.ssim_s);
  const AleResult a = ale(in.tau_pred, in.tau_valid, in.tau_truth, in.intensity_truth,
                          ale_threshold);
  r.ale_percent = a.percent;
  r.mask_coverage = a.coverage;
  return r;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_report_header(std::ostream& os) {
  os << "sample_id,method,psnr_g,psnr_s,psnr_mean,ssim_g,ssim_s,ssim_mean,ale_percent,"
        "mask_coverage\n";
}

void write_report_row(std::ostream& os, const std::string& sample_id, const std::string& method,
                      const MetricsReport& r) {
  os << sample_id << ',' << method << ',' << format_number(r.psnr_g) << ','
     << format_number(r.psnr_s) << ',' << format_number(r.psnr_mean) << ','
     << format_number(r.ssim_g) << ',' << format_number(r.ssim_s) << ','
     << format_number(r.ssim_mean) << ',' << format_number(r.ale_percent) << ','
     << format_number(r.mask_coverage) << '\n';
}

}  // namespace flimzs::metrics
