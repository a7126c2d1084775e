#include "flimzs/gradcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "flimzs/rng.hpp"

namespace flimzs::grad {

namespace {

struct Probed {
  double value;
  KinkProbe probe;
};

Probed evaluate(const std::function<Tensor<double>()>& loss_fn) {
  Probed out{0.0, {}};
  ScopedKinkProbe scope(out.probe);
  out.value = loss_fn().item();
  return out;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss_fn,
                           std::span<Parameter<double>> params, const GradCheckOptions& options) {
  for (auto& p : params) p.tensor.zero_grad();
  KinkProbe base;
  {
    ScopedKinkProbe scope(base);
    loss_fn().backward();
  }

  GradCheckReport report;
  CounterRng rng = CounterRng(options.seed).split("grad_check");
  for (auto& p : params) {
    ParamCheck check{p.name};
    if (!p.tensor.has_grad()) {
      check.dead = true;
      report.zero_grad_params.push_back(p.name);
      report.params.push_back(check);
      continue;
    }
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());

    std::vector<std::size_t> entries(p.tensor.numel());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    const std::size_t limit = options.max_entries_per_param;
    if (limit > 0 && entries.size() > limit) {
      CounterRng pick = rng.split(p.name);
      for (std::size_t i = 0; i < limit; ++i) {
        std::swap(entries[i], entries[i + pick.below(entries.size() - i)]);
      }
      entries.resize(limit);
      std::sort(entries.begin(), entries.end());
    }

    auto values = p.tensor.mutable_values();
    for (std::size_t idx : entries) {
      const double original = values[idx];
      values[idx] = original + options.h;
      const Probed plus = evaluate(loss_fn);
      values[idx] = original - options.h;
      const Probed minus = evaluate(loss_fn);
      values[idx] = original;

      const bool crosses = plus.probe.signature != base.signature ||
                           minus.probe.signature != base.signature ||
                           plus.probe.min_margin < options.kink_margin ||
                           minus.probe.min_margin < options.kink_margin;
      if (crosses) {
        ++check.excluded;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.h);
      const double a = analytic[idx];
      const double roundoff = options.roundoff_ulps * std::numeric_limits<double>::epsilon() *
                              (std::fabs(plus.value) + std::fabs(minus.value)) / (2.0 * options.h);
      const double excess = std::max(0.0, std::fabs(a - numeric) - roundoff);
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      check.max_rel_error = std::max(check.max_rel_error, excess / denom);
      ++check.checked;
    }
    report.checked += check.checked;
    report.excluded += check.excluded;
    if (check.max_rel_error > report.max_rel_error || report.worst_param.empty()) {
      if (check.max_rel_error >= report.max_rel_error) {
        report.max_rel_error = check.max_rel_error;
        report.worst_param = check.name;
      }
    }
    report.params.push_back(check);
  }
  for (auto& p : params) p.tensor.zero_grad();
  return report;
}

}  // namespace flimzs::grad
