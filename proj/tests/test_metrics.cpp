#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "flimzs/errors.hpp"
#include "flimzs/metrics/metrics.hpp"
#include "flimzs/rng.hpp"

using namespace flimzs;
using namespace flimzs::metrics;

namespace {

Plane random_plane(std::size_t w, std::size_t h, std::uint64_t seed) {
  CounterRng r(seed);
  Plane p(w, h);
  for (double& v : p.data) v = r.uniform();
  return p;
}

// Reference SSIM computed from per-window sums in long double.
double reference_ssim(const Plane& a, const Plane& b, int win, double c1, double c2) {
  long double total = 0;
  std::size_t count = 0;
  for (std::size_t y = 0; y + win <= a.height; ++y)
    for (std::size_t x = 0; x + win <= a.width; ++x) {
      long double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < win; ++dy)
        for (int dx = 0; dx < win; ++dx) {
          const long double u = a.at(x + dx, y + dy), v = b.at(x + dx, y + dy);
          sa += u, sb += v, saa += u * u, sbb += v * v, sab += u * v;
        }
      const long double n = win * win;
      const long double ma = sa / n, mb = sb / n;
      const long double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cab = sab / n - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return static_cast<double>(total / count);
}

}  // namespace

TEST_CASE("psnr of a uniform 0.1 offset at peak 1 is 20 dB") {
  Plane a(16, 16, 0.3), b(16, 16, 0.4);
  CHECK(psnr(a, b, 1.0) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(std::isinf(psnr(a, a, 1.0)));
  CHECK(psnr(a, a, 1.0) > 0);
  // Default peak is the truth maximum.
  CHECK(psnr(a, b) == doctest::Approx(20.0 * std::log10(0.4 / 0.1)));
  CHECK_THROWS_AS(psnr(Plane(2, 2), Plane(3, 2), 1.0), DimensionError);
}

TEST_CASE("ssim closed forms") {
  Plane c(10, 10, 0.5), d(10, 10, 1.0);
  CHECK(std::abs(ssim_metric(c, d) - (1 + 1e-4) / (1.25 + 1e-4)) < 1e-6);
  const Plane r = random_plane(12, 9, 1);
  CHECK(ssim_metric(r, r) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim agrees with an extended-precision reference") {
  const Plane a = random_plane(15, 11, 2), b = random_plane(15, 11, 3);
  CHECK(ssim_metric(a, b) == doctest::Approx(reference_ssim(a, b, 7, 1e-4, 9e-4)).epsilon(1e-10));
  CHECK(ssim_metric(a, b, 5, 0.01, 0.03) ==
        doctest::Approx(reference_ssim(a, b, 5, 0.01, 0.03)).epsilon(1e-10));
  CHECK(ssim_metric(a, b) == doctest::Approx(ssim_metric(b, a)).epsilon(1e-14));
  CHECK_THROWS_AS(ssim_metric(Plane(5, 5), Plane(5, 5)), DimensionError);
}

TEST_CASE("ale of a uniform 1.1x bias is 10 percent") {
  Plane truth(8, 8, 2.0), inten(8, 8, 1.0);
  Plane pred(8, 8, 2.2);
  const auto r = ale(pred, {}, truth, inten);
  CHECK(std::abs(r.percent - 10.0) < 1e-9);
  CHECK(r.coverage == 1.0);
}

TEST_CASE("ale mask excludes dim pixels and invalid predictions") {
  Plane truth(4, 1, 1.0), inten(4, 1), pred(4, 1);
  inten.data = {1.0, 0.04, 1.0, 1.0};  // 0.04 is below 5% of the max
  pred.data = {1.5, 100.0, 1.0, 7.0};
  const std::vector<std::uint8_t> valid{1, 1, 1, 0};
  const auto r = ale(pred, valid, truth, inten);
  CHECK(r.percent == doctest::Approx(25.0));  // mean of 50% and 0%
  CHECK(r.coverage == doctest::Approx(0.5));
  const std::vector<std::uint8_t> none(4, 0);
  CHECK_THROWS_AS(ale(pred, none, truth, inten), EvaluationError);
  Plane zero_truth(4, 1, 0.0);
  CHECK_THROWS_AS(ale(pred, {}, zero_truth, inten), EvaluationError);
}

TEST_CASE("evaluate on identical inputs") {
  const Plane g = random_plane(10, 10, 4), s = random_plane(10, 10, 5);
  Plane tau(10, 10, 2.0), inten(10, 10, 1.0);
  const std::vector<std::uint8_t> valid(100, 1);
  const auto r = evaluate({g, s, tau, valid, g, s, tau, inten});
  CHECK(std::isinf(r.psnr_g));
  CHECK(std::isinf(r.psnr_mean));
  CHECK(r.ssim_mean == doctest::Approx(1.0));
  CHECK(r.ale_percent == 0.0);
}

TEST_CASE("evaluate uses the truth maximum as the peak for both metrics") {
  const Plane g = random_plane(10, 10, 6), s = random_plane(10, 10, 7);
  Plane pg = g, ps = s;
  for (double& v : pg.data) v *= 0.9;
  for (double& v : ps.data) v += 0.05;
  Plane tau(10, 10, 2.0), inten(10, 10, 1.0);
  const auto r = evaluate({pg, ps, tau, {}, g, s, tau, inten});
  CHECK(r.psnr_g == doctest::Approx(psnr(pg, g, max_value(g))));
  CHECK(r.psnr_mean == doctest::Approx((r.psnr_g + r.psnr_s) / 2));
  Plane ng = g, npg = pg;
  for (double& v : ng.data) v /= max_value(g);
  for (double& v : npg.data) v /= max_value(g);
  CHECK(r.ssim_g == doctest::Approx(ssim_metric(npg, ng)));
  CHECK(r.ssim_mean == doctest::Approx((r.ssim_g + r.ssim_s) / 2));
}

TEST_CASE("report csv schema and number formatting") {
  std::ostringstream os;
  write_report_header(os);
  MetricsReport r;
  r.psnr_g = std::numeric_limits<double>::infinity();
  r.psnr_s = 20.5;
  r.ssim_mean = 0.25;
  write_report_row(os, "scene", "zs", r);
  const std::string text = os.str();
  CHECK(text.rfind(
            "sample_id,method,psnr_g,psnr_s,psnr_mean,ssim_g,ssim_s,ssim_mean,ale_percent,"
            "mask_coverage\n",
            0) == 0);
  CHECK(text.find("scene,zs,inf,20.5,") != std::string::npos);
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}
