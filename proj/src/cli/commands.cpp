#include "flimzs/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "flimzs/cli/fph.hpp"
#include "flimzs/cli/gradcheck_suite.hpp"
#include "flimzs/cli/ppm.hpp"
#include "flimzs/cli/run_config.hpp"
#include "flimzs/errors.hpp"
#include "flimzs/metrics/metrics.hpp"
#include "flimzs/rng.hpp"

namespace flimzs::cli {

namespace fs = std::filesystem;

namespace {

struct Arm {
  std::string name;
  bool fidelity, structure, tv;
};

const std::vector<Arm>& arms() {
  static const std::vector<Arm> a = {
      {"L_intensity", false, false, false},
      {"+L_fidelity", true, false, false},
      {"+L_structure", false, true, false},
      {"+L_TV", false, false, true},
      {"+L_fidelity+L_structure", true, true, false},
      {"All Loss", true, true, true},
  };
  return a;
}

bool given(const CLI::Option* opt) { return opt != nullptr && opt->count() > 0; }

RunConfig load_config(const std::string& path, RunConfig base) {
  if (path.empty()) return base;
  return parse_run_config(read_file(path), std::move(base));
}

std::pair<double, double> parse_range(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("--tau-range expects lo,hi");
  auto number = [&](std::string_view s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
      throw ConfigError("--tau-range: cannot parse '" + std::string(s) + "'");
    }
    return v;
  };
  const std::string_view sv(text);
  const double lo = number(sv.substr(0, comma));
  const double hi = number(sv.substr(comma + 1));
  if (!(hi > lo)) throw ConfigError("--tau-range requires lo < hi");
  return {lo, hi};
}

FphContainer container_for(std::size_t w, std::size_t h, double omega) {
  FphContainer c;
  c.width = static_cast<std::uint32_t>(w);
  c.height = static_cast<std::uint32_t>(h);
  c.omega = omega;
  return c;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out = a;
  for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] *= b.data[k];
  return out;
}

// Intensity-scaled phasor planes: y_g / y_s when present, else g * I and s * I.
std::pair<Plane, Plane> scaled_phasors(const FphContainer& c, const std::string& role) {
  if (c.find("y_g") && c.find("y_s")) return {c.plane("y_g"), c.plane("y_s")};
  for (const char* name : {"g", "s", "I"}) {
    if (!c.find(name)) {
      throw ConfigError(role + " file is missing plane '" + name + "' (and has no y_g/y_s)");
    }
  }
  const Plane i = c.plane("I");
  return {product(c.plane("g"), i), product(c.plane("s"), i)};
}

phasor::NoisyAcquisition acquisition_from(const FphContainer& c) {
  for (const char* name : {"y_g", "y_s", "y_I"}) {
    if (!c.find(name)) throw ConfigError(std::string("input file is missing plane '") + name + "'");
  }
  phasor::NoisyAcquisition acq;
  acq.y_g = c.plane("y_g");
  acq.y_s = c.plane("y_s");
  acq.y_i = c.plane("y_I");
  acq.omega = c.omega;
  return acq;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  std::string out, config;
  std::size_t width = 64, height = 64;
  double tau_bg = 1.0, tau_fg = 3.0, int_bg = 0.25, int_fg = 1.0;
  std::string shape = "disk";
  double photons = 20.0, sigma = 0.02;
  std::string mode = "photon_mc";
  std::uint64_t seed = 0;
  int frames = 1;
  std::map<std::string, CLI::Option*> opts;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Synthesize a two-region scene and a noisy acquisition");
  c->add_option("--out", a.out, "Output directory")->required();
  a.opts["width"] = c->add_option("--width", a.width, "Image width")
                        ->check(CLI::PositiveNumber)->capture_default_str();
  a.opts["height"] = c->add_option("--height", a.height, "Image height")
                         ->check(CLI::PositiveNumber)->capture_default_str();
  a.opts["tau-bg"] = c->add_option("--tau-bg", a.tau_bg, "Background lifetime (ns)")
                         ->check(CLI::NonNegativeNumber)->capture_default_str();
  c->add_option("--tau-fg", a.tau_fg, "Foreground lifetime (ns)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  a.opts["int-bg"] = c->add_option("--int-bg", a.int_bg, "Background intensity")
                         ->check(CLI::NonNegativeNumber)->capture_default_str();
  c->add_option("--int-fg", a.int_fg, "Foreground intensity")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  c->add_option("--shape", a.shape, "Foreground shape")
      ->check(CLI::IsMember({"disk", "rect"}))->capture_default_str();
  a.opts["photons"] = c->add_option("--photons", a.photons, "Expected photons per unit intensity")
                          ->check(CLI::PositiveNumber)->capture_default_str();
  a.opts["sigma"] = c->add_option("--sigma", a.sigma, "Read-noise standard deviation")
                        ->check(CLI::NonNegativeNumber)->capture_default_str();
  a.opts["mode"] = c->add_option("--mode", a.mode, "Noise model")
                       ->check(CLI::IsMember({"photon_mc", "additive"}))->capture_default_str();
  a.opts["seed"] = c->add_option("--seed", a.seed, "Noise seed")->capture_default_str();
  c->add_option("--frames", a.frames, "Independent draws averaged into avg.fph")
      ->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--config", a.config, "key=value run configuration");
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  RunConfig base;
  base.scene.width = a.width;
  base.scene.height = a.height;
  base.scene.background_tau = a.tau_bg;
  base.scene.background_intensity = a.int_bg;
  base.noise.photon_scale = a.photons;
  base.noise.sigma_g = base.noise.sigma_s = base.noise.sigma_i = a.sigma;
  base.noise.mode = phasor::parse_noise_mode(a.mode);
  base.noise.seed = a.seed;
  RunConfig cfg = load_config(a.config, base);
  if (!a.config.empty()) {
    // Explicit flags win over the file.
    if (given(a.opts.at("width"))) cfg.scene.width = a.width;
    if (given(a.opts.at("height"))) cfg.scene.height = a.height;
    if (given(a.opts.at("tau-bg"))) cfg.scene.background_tau = a.tau_bg;
    if (given(a.opts.at("int-bg"))) cfg.scene.background_intensity = a.int_bg;
    if (given(a.opts.at("photons"))) cfg.noise.photon_scale = a.photons;
    if (given(a.opts.at("sigma"))) {
      cfg.noise.sigma_g = cfg.noise.sigma_s = cfg.noise.sigma_i = a.sigma;
    }
    if (given(a.opts.at("mode"))) cfg.noise.mode = phasor::parse_noise_mode(a.mode);
    if (given(a.opts.at("seed"))) cfg.noise.seed = a.seed;
  }
  if (cfg.scene.regions.empty()) {
    const auto two = phasor::two_region_scene(
        cfg.scene.width, cfg.scene.height, cfg.scene.background_tau, a.tau_fg,
        cfg.scene.background_intensity, a.int_fg,
        a.shape == "disk" ? phasor::RegionShape::disk : phasor::RegionShape::rectangle);
    cfg.scene.regions = two.regions;
  }
  const phasor::PhasorField field = phasor::synthesize_scene(cfg.scene);

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create directory '" + a.out + "': " + ec.message());
  const fs::path dir(a.out);

  FphContainer clean = container_for(field.width, field.height, field.omega);
  clean.add("g", field.g);
  clean.add("s", field.s);
  clean.add("I", field.intensity);
  clean.add("tau", field.tau);
  write_fph(dir / "clean.fph", clean);

  auto save_acq = [&](const phasor::NoisyAcquisition& acq, const fs::path& path) {
    FphContainer c = container_for(field.width, field.height, field.omega);
    c.add("y_g", acq.y_g);
    c.add("y_s", acq.y_s);
    c.add("y_I", acq.y_i);
    write_fph(path, c);
  };
  const phasor::NoisyAcquisition first = phasor::corrupt(field, cfg.noise);
  save_acq(first, dir / "noisy.fph");

  if (a.frames > 1) {
    phasor::NoisyAcquisition sum = first;
    const CounterRng frames = CounterRng(cfg.noise.seed).split("frame");
    for (int k = 1; k < a.frames; ++k) {
      phasor::NoiseParams p = cfg.noise;
      p.seed = frames.split(static_cast<std::uint64_t>(k)).key();
      const phasor::NoisyAcquisition draw = phasor::corrupt(field, p);
      for (std::size_t i = 0; i < sum.y_g.data.size(); ++i) {
        sum.y_g.data[i] += draw.y_g.data[i];
        sum.y_s.data[i] += draw.y_s.data[i];
        sum.y_i.data[i] += draw.y_i.data[i];
      }
    }
    for (Plane* p : {&sum.y_g, &sum.y_s, &sum.y_i}) {
      for (double& v : p->data) v /= a.frames;
    }
    save_acq(sum, dir / "avg.fph");
  }
  out << "wrote " << (dir / "clean.fph").string() << ", " << (dir / "noisy.fph").string();
  if (a.frames > 1) out << ", " << (dir / "avg.fph").string();
  out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------- denoise/ablate

struct DenoiseArgs {
  std::string in, out, config, trace, render, prior = "selfsup", prior_clean;
  std::string tau_range = "1,4";
  int iters = 1000, prior_iters = 500;
  double lambda1 = 1.0, lambda2 = 0.1, lambda3 = 0.2, alpha = 1.0, lr = 1e-3;
  std::size_t patch = 64;
  std::uint64_t seed = 0;
  bool verbose = false;
  // ablate only
  std::string truth, out_dir, sample_id = "sample";
  std::map<std::string, CLI::Option*> opts;
};

void add_optimizer_flags(CLI::App* c, DenoiseArgs& a, bool ablate) {
  a.opts["prior"] = c->add_option("--prior", a.prior, "Intensity prior")
                        ->check(CLI::IsMember({"passthrough", "gaussian", "median", "selfsup"}))
                        ->capture_default_str();
  a.opts["iters"] = c->add_option("--iters", a.iters, "Optimization iterations")
                        ->check(CLI::PositiveNumber)->capture_default_str();
  if (!ablate) {
    a.opts["lambda1"] = c->add_option("--lambda1", a.lambda1, "Fidelity weight")
                            ->check(CLI::NonNegativeNumber)->capture_default_str();
    a.opts["lambda2"] = c->add_option("--lambda2", a.lambda2, "Structure weight")
                            ->check(CLI::NonNegativeNumber)->capture_default_str();
    a.opts["lambda3"] = c->add_option("--lambda3", a.lambda3, "Total-variation weight")
                            ->check(CLI::NonNegativeNumber)->capture_default_str();
  }
  a.opts["patch"] = c->add_option("--patch", a.patch, "Training patch size")
                        ->check(CLI::PositiveNumber)->capture_default_str();
  a.opts["seed"] = c->add_option("--seed", a.seed, "Seed for initialization and sampling")
                       ->capture_default_str();
  a.opts["lr"] = c->add_option("--lr", a.lr, "Initial learning rate")
                     ->check(CLI::PositiveNumber)->capture_default_str();
  a.opts["prior-iters"] = c->add_option("--prior-iters", a.prior_iters, "selfsup prior iterations")
                              ->check(CLI::PositiveNumber)->capture_default_str();
  a.opts["alpha"] = c->add_option("--alpha", a.alpha, "selfsup blind-spot weight")
                        ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c->add_option("--prior-clean", a.prior_clean,
                "FPH file whose I plane supervises the prior when alpha < 1");
  c->add_option("--config", a.config, "key=value run configuration");
  c->add_flag("--verbose", a.verbose, "Print loss every 100 iterations");
}

void add_denoise(CLI::App& app, DenoiseArgs& a) {
  auto* c = app.add_subcommand("denoise", "Zero-shot denoising of one acquisition");
  c->add_option("--in", a.in, "Noisy FPH input")->required();
  c->add_option("--out", a.out, "Denoised FPH output")->required();
  c->add_option("--trace", a.trace, "Loss trace CSV");
  c->add_option("--render", a.render, "HSV lifetime rendering (PPM)");
  c->add_option("--tau-range", a.tau_range, "Rendering lifetime range lo,hi in ns")
      ->capture_default_str();
  add_optimizer_flags(c, a, false);
}

void add_ablate(CLI::App& app, DenoiseArgs& a) {
  auto* c = app.add_subcommand("ablate", "Run the six loss-combination arms on one acquisition");
  c->add_option("--in", a.in, "Noisy FPH input")->required();
  c->add_option("--truth", a.truth, "Ground-truth FPH")->required();
  c->add_option("--out-dir", a.out_dir, "Output directory")->required();
  c->add_option("--sample-id", a.sample_id, "sample_id column")->capture_default_str();
  add_optimizer_flags(c, a, true);
}

RunConfig optimizer_config(const DenoiseArgs& a) {
  RunConfig base;
  base.prior.kind = prior::parse_prior_kind(a.prior);
  base.prior.iterations = a.prior_iters;
  base.prior.alpha = a.alpha;
  base.prior.seed = a.seed;
  base.zero_shot.iterations = a.iters;
  base.zero_shot.patch = a.patch;
  base.zero_shot.seed = a.seed;
  base.zero_shot.learning_rate = a.lr;
  base.zero_shot.weights = {a.lambda1, a.lambda2, a.lambda3};
  RunConfig cfg = load_config(a.config, base);
  if (a.config.empty()) return cfg;
  auto set = [&](const char* key, auto& field, const auto& value) {
    auto it = a.opts.find(key);
    if (it != a.opts.end() && given(it->second)) field = value;
  };
  set("prior", cfg.prior.kind, base.prior.kind);
  set("prior-iters", cfg.prior.iterations, a.prior_iters);
  set("alpha", cfg.prior.alpha, a.alpha);
  set("seed", cfg.prior.seed, a.seed);
  set("seed", cfg.zero_shot.seed, a.seed);
  set("iters", cfg.zero_shot.iterations, a.iters);
  set("patch", cfg.zero_shot.patch, a.patch);
  set("lr", cfg.zero_shot.learning_rate, a.lr);
  set("lambda1", cfg.zero_shot.weights.fidelity, a.lambda1);
  set("lambda2", cfg.zero_shot.weights.structure, a.lambda2);
  set("lambda3", cfg.zero_shot.weights.tv, a.lambda3);
  return cfg;
}

prior::PriorResult compute_prior(const phasor::NoisyAcquisition& acq, const RunConfig& cfg,
                                 const std::string& clean_path) {
  std::optional<Plane> clean;
  if (!clean_path.empty()) {
    const FphContainer c = read_fph(clean_path);
    if (!c.find("I")) throw ConfigError("prior reference file is missing plane 'I'");
    clean = c.plane("I");
  }
  return prior::denoise_intensity(acq.y_i, cfg.prior, clean ? &*clean : nullptr);
}

zsnet::ProgressFn progress_printer(bool verbose, std::ostream& out) {
  if (!verbose) return {};
  return [&out](const zsnet::TraceRow& r) {
    if (r.iteration % 100 == 0) {
      out << "iter " << r.iteration << " lr " << r.lr << " loss " << r.total << '\n';
    }
  };
}

FphContainer denoised_container(const zsnet::DenoiseResult& r, double omega) {
  FphContainer c = container_for(r.y_g.width, r.y_g.height, omega);
  c.add("y_g", r.y_g);
  c.add("y_s", r.y_s);
  c.add("y_I", r.y_i);
  c.add("tau", r.lifetime.tau_ns);
  return c;
}

int cmd_denoise(const DenoiseArgs& a, std::ostream& out) {
  const RunConfig cfg = optimizer_config(a);
  std::optional<std::pair<double, double>> range;
  if (!a.render.empty()) range = parse_range(a.tau_range);
  zsnet::validate(cfg.zero_shot);
  prior::validate(cfg.prior);

  const FphContainer in = read_fph(a.in);
  const phasor::NoisyAcquisition acq = acquisition_from(in);
  const prior::PriorResult pr = compute_prior(acq, cfg, a.prior_clean);
  const zsnet::DenoiseResult r =
      zsnet::zero_shot_denoise(acq, pr, cfg.zero_shot, progress_printer(a.verbose, out));

  write_fph(a.out, denoised_container(r, in.omega));
  if (!a.trace.empty()) {
    std::ostringstream os;
    zsnet::write_trace_csv(os, r.trace);
    write_file_atomic(a.trace, os.str());
  }
  if (range) {
    write_ppm(a.render, phasor::render_lifetime(r.lifetime.tau_ns, r.y_i, range->first,
                                                range->second));
  }
  out << "denoised " << a.in << " -> " << a.out << " (" << r.trace.size() << " iterations, "
      << std::fixed << std::setprecision(1) << r.wall_seconds << " s, final loss "
      << std::setprecision(6) << r.trace.back().total << ")\n";
  return kExitOk;
}

// ------------------------------------------------------------------- eval

struct Truth {
  Plane g, s, tau, intensity;
};

Truth load_truth(const FphContainer& c) {
  if (!c.find("tau")) throw ConfigError("truth file is missing plane 'tau'");
  Truth t;
  std::tie(t.g, t.s) = scaled_phasors(c, "truth");
  t.tau = c.plane("tau");
  if (c.find("I")) t.intensity = c.plane("I");
  else if (c.find("y_I")) t.intensity = c.plane("y_I");
  else throw ConfigError("truth file is missing plane 'I'");
  return t;
}

metrics::MetricsReport evaluate_pair(const Plane& pred_g, const Plane& pred_s,
                                     const phasor::LifetimeMap& pred_tau, const Truth& t,
                                     double threshold) {
  if (!pred_g.same_shape(t.g)) {
    throw DimensionError("prediction is " + std::to_string(pred_g.width) + "x" +
                         std::to_string(pred_g.height) + " but truth is " +
                         std::to_string(t.g.width) + "x" + std::to_string(t.g.height));
  }
  return metrics::evaluate({pred_g, pred_s, pred_tau.tau_ns, pred_tau.valid, t.g, t.s, t.tau,
                            t.intensity},
                           threshold);
}

struct EvalArgs {
  std::string pred, truth, report, sample_id = "sample", method = "pred";
  double threshold = 0.05;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Score a prediction against ground truth");
  c->add_option("--pred", a.pred, "Predicted FPH")->required();
  c->add_option("--truth", a.truth, "Ground-truth FPH")->required();
  c->add_option("--report", a.report, "CSV report to append to");
  c->add_option("--ale-threshold", a.threshold, "Foreground threshold, fraction of max intensity")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c->add_option("--sample-id", a.sample_id, "sample_id column")->capture_default_str();
  c->add_option("--method", a.method, "method column")->capture_default_str();
}

void append_report(const std::string& path, const std::string& sample_id,
                   const std::string& method, const metrics::MetricsReport& r) {
  std::error_code ec;
  const bool fresh = !fs::exists(path, ec) || fs::file_size(path, ec) == 0;
  std::string existing = fresh ? std::string() : read_file(path);
  std::ostringstream os;
  os << existing;
  if (fresh) metrics::write_report_header(os);
  metrics::write_report_row(os, sample_id, method, r);
  write_file_atomic(path, os.str());
}

void print_summary(std::ostream& out, const std::string& label, const metrics::MetricsReport& r) {
  using metrics::format_number;
  out << label << ": PSNR g " << format_number(r.psnr_g) << " s " << format_number(r.psnr_s)
      << " mean " << format_number(r.psnr_mean) << " dB; SSIM mean "
      << format_number(r.ssim_mean) << "; ALE (foreground-masked mean relative error) "
      << format_number(r.ale_percent) << "% over "
      << format_number(100.0 * r.mask_coverage) << "% of pixels\n";
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const FphContainer pred = read_fph(a.pred);
  const FphContainer truth_file = read_fph(a.truth);
  const Truth truth = load_truth(truth_file);
  const auto [pg, ps] = scaled_phasors(pred, "prediction");
  phasor::LifetimeMap tau;
  if (pred.find("tau")) {
    tau.tau_ns = pred.plane("tau");
    tau.valid.resize(tau.tau_ns.data.size());
    for (std::size_t k = 0; k < tau.valid.size(); ++k) {
      const double v = tau.tau_ns.data[k];
      tau.valid[k] = std::isfinite(v) && v != 0.0;
    }
  } else {
    tau = phasor::lifetime_map(pg, ps, pred.omega);
  }
  const metrics::MetricsReport r = evaluate_pair(pg, ps, tau, truth, a.threshold);
  if (!a.report.empty()) append_report(a.report, a.sample_id, a.method, r);
  print_summary(out, a.method, r);
  return kExitOk;
}

int exit_code_for(const std::exception& e);

int cmd_ablate(const DenoiseArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = optimizer_config(a);
  zsnet::validate(cfg.zero_shot);
  prior::validate(cfg.prior);
  const FphContainer in = read_fph(a.in);
  const phasor::NoisyAcquisition acq = acquisition_from(in);
  const Truth truth = load_truth(read_fph(a.truth));

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw IoError("cannot create directory '" + a.out_dir + "': " + ec.message());
  const fs::path dir(a.out_dir);

  const prior::PriorResult pr = compute_prior(acq, cfg, a.prior_clean);
  std::ostringstream csv;
  metrics::write_report_header(csv);
  std::vector<std::string> failures;
  int first_failure = kExitOk;
  for (std::size_t k = 0; k < arms().size(); ++k) {
    const Arm& arm = arms()[k];
    zsnet::ZeroShotConfig zc = cfg.zero_shot;
    const zsnet::LossWeights w = cfg.zero_shot.weights;
    zc.weights = {arm.fidelity ? w.fidelity : 0.0, arm.structure ? w.structure : 0.0,
                  arm.tv ? w.tv : 0.0};
    try {
      const zsnet::DenoiseResult r =
          zsnet::zero_shot_denoise(acq, pr, zc, progress_printer(a.verbose, out));
      write_fph(dir / ("arm" + std::to_string(k + 1) + ".fph"), denoised_container(r, in.omega));
      const metrics::MetricsReport m = evaluate_pair(r.y_g, r.y_s, r.lifetime, truth, 0.05);
      metrics::write_report_row(csv, a.sample_id, arm.name, m);
      print_summary(out, arm.name, m);
    } catch (const std::exception& e) {
      failures.push_back(arm.name + ": " + e.what());
      if (first_failure == kExitOk) first_failure = exit_code_for(e);
    }
  }
  write_file_atomic(dir / "ablation.csv", csv.str());
  out << "wrote " << (dir / "ablation.csv").string() << " (" << arms().size() - failures.size()
      << " of " << arms().size() << " arms)\n";
  for (const auto& f : failures) err << "arm failed: " << f << '\n';
  return first_failure;
}

// -------------------------------------------------------------- gradcheck

struct GradArgs {
  std::string op;
  double h = 1e-4;
};

void add_gradcheck(CLI::App& app, GradArgs& a) {
  auto* c = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  c->set_help_flag("--help", "Print this help message and exit");
  c->add_option("--op", a.op, "Run only this check");
  c->add_option("--h", a.h, "Central-difference step")->capture_default_str();
}

int cmd_gradcheck(const GradArgs& a, std::ostream& out, std::ostream& err) {
  std::optional<std::string> only;
  if (!a.op.empty()) only = a.op;
  const auto results = run_gradcheck_suite(only, a.h);
  std::vector<std::string> failed;
  for (const auto& r : results) {
    out << std::left << std::setw(18) << r.name << " max_rel_error " << std::scientific
        << std::setprecision(3) << r.max_rel_error << std::defaultfloat << "  checked "
        << r.checked << "  excluded " << r.excluded << "  " << (r.passed ? "PASS" : "FAIL")
        << '\n';
    if (!r.passed) failed.push_back(r.name);
  }
  if (failed.empty()) return kExitOk;
  err << "gradient check failed:";
  for (const auto& f : failed) err << ' ' << f;
  err << '\n';
  return kExitGradCheck;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const NumericError*>(&e)) return kExitOptimization;
  if (dynamic_cast<const EvaluationError*>(&e)) return kExitEvaluation;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
      dynamic_cast<const DomainError*>(&e) || dynamic_cast<const ContractError*>(&e)) {
    return kExitUsage;
  }
  return kExitUnexpected;
}

}  // namespace

const std::vector<std::string>& ablation_arm_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& a : arms()) n.push_back(a.name);
    return n;
  }();
  return names;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-shot phasor FLIM denoising", "flimzs"};
  app.require_subcommand(1);
  SynthArgs synth;
  DenoiseArgs denoise, ablate;
  EvalArgs eval;
  GradArgs gradcheck;
  add_synth(app, synth);
  add_denoise(app, denoise);
  add_eval(app, eval);
  add_ablate(app, ablate);
  add_gradcheck(app, gradcheck);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "synth") return cmd_synth(synth, out);
    if (name == "denoise") return cmd_denoise(denoise, out);
    if (name == "eval") return cmd_eval(eval, out);
    if (name == "ablate") return cmd_ablate(ablate, out, err);
    return cmd_gradcheck(gradcheck, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace flimzs::cli
