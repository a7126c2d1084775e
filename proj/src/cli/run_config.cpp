#include "flimzs/cli/run_config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "flimzs/errors.hpp"
#include "flimzs/metrics/metrics.hpp"

namespace flimzs::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("not a number: '" + std::string(v) + "'");
  }
  return out;
}

template <typename I>
I to_integer(std::string_view v) {
  I out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("not an integer: '" + std::string(v) + "'");
  }
  return out;
}

std::string num(double v) { return metrics::format_number(v); }

using Setter = std::function<void(RunConfig&, std::string_view)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <typename Member>
Field real(Member member) {
  return {[member](RunConfig& c, std::string_view v) { member(c) = to_double(v); },
          [member](const RunConfig& c) { return num(member(c)); }};
}

template <typename I, typename Member>
Field integer(Member member) {
  return {[member](RunConfig& c, std::string_view v) { member(c) = to_integer<I>(v); },
          [member](const RunConfig& c) {
            return std::to_string(member(c));
          }};
}

// Serialization order.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"scene.width", integer<std::size_t>([](auto& c) -> auto& { return c.scene.width; })},
      {"scene.height", integer<std::size_t>([](auto& c) -> auto& { return c.scene.height; })},
      {"scene.background_tau", real([](auto& c) -> auto& { return c.scene.background_tau; })},
      {"scene.background_intensity",
       real([](auto& c) -> auto& { return c.scene.background_intensity; })},
      {"scene.omega", real([](auto& c) -> auto& { return c.scene.omega; })},
      {"noise.mode",
       {[](RunConfig& c, std::string_view v) { c.noise.mode = phasor::parse_noise_mode(v); },
        [](const RunConfig& c) { return std::string(phasor::to_string(c.noise.mode)); }}},
      {"noise.photon_scale", real([](auto& c) -> auto& { return c.noise.photon_scale; })},
      {"noise.sigma_g", real([](auto& c) -> auto& { return c.noise.sigma_g; })},
      {"noise.sigma_s", real([](auto& c) -> auto& { return c.noise.sigma_s; })},
      {"noise.sigma_i", real([](auto& c) -> auto& { return c.noise.sigma_i; })},
      {"noise.seed", integer<std::uint64_t>([](auto& c) -> auto& { return c.noise.seed; })},
      {"prior.kind",
       {[](RunConfig& c, std::string_view v) { c.prior.kind = prior::parse_prior_kind(v); },
        [](const RunConfig& c) { return std::string(prior::to_string(c.prior.kind)); }}},
      {"prior.gaussian_sigma", real([](auto& c) -> auto& { return c.prior.gaussian_sigma; })},
      {"prior.median_radius",
       integer<int>([](auto& c) -> auto& { return c.prior.median_radius; })},
      {"prior.alpha", real([](auto& c) -> auto& { return c.prior.alpha; })},
      {"prior.iterations", integer<int>([](auto& c) -> auto& { return c.prior.iterations; })},
      {"prior.mask_fraction", real([](auto& c) -> auto& { return c.prior.mask_fraction; })},
      {"prior.learning_rate", real([](auto& c) -> auto& { return c.prior.learning_rate; })},
      {"prior.seed", integer<std::uint64_t>([](auto& c) -> auto& { return c.prior.seed; })},
      {"zs.iterations", integer<int>([](auto& c) -> auto& { return c.zero_shot.iterations; })},
      {"zs.patch", integer<std::size_t>([](auto& c) -> auto& { return c.zero_shot.patch; })},
      {"zs.learning_rate", real([](auto& c) -> auto& { return c.zero_shot.learning_rate; })},
      {"zs.weight_decay", real([](auto& c) -> auto& { return c.zero_shot.weight_decay; })},
      {"zs.plateau_factor", real([](auto& c) -> auto& { return c.zero_shot.plateau_factor; })},
      {"zs.plateau_patience",
       integer<int>([](auto& c) -> auto& { return c.zero_shot.plateau_patience; })},
      {"zs.min_learning_rate",
       real([](auto& c) -> auto& { return c.zero_shot.min_learning_rate; })},
      {"zs.seed", integer<std::uint64_t>([](auto& c) -> auto& { return c.zero_shot.seed; })},
      {"zs.lambda1", real([](auto& c) -> auto& { return c.zero_shot.weights.fidelity; })},
      {"zs.lambda2", real([](auto& c) -> auto& { return c.zero_shot.weights.structure; })},
      {"zs.lambda3", real([](auto& c) -> auto& { return c.zero_shot.weights.tv; })},
      {"zs.norm_percentile",
       real([](auto& c) -> auto& { return c.zero_shot.norm_percentile; })},
  };
  return table;
}

constexpr std::string_view kRegionPrefix = "scene.region.";

phasor::Region parse_region(std::string_view value) {
  std::istringstream in{std::string(value)};
  std::string kind;
  in >> kind;
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(t);
  phasor::Region r;
  if (kind == "disk" && tokens.size() == 5) {
    r.shape = phasor::RegionShape::disk;
    r.cx = to_double(tokens[0]);
    r.cy = to_double(tokens[1]);
    r.radius = to_double(tokens[2]);
  } else if (kind == "rect" && tokens.size() == 6) {
    r.shape = phasor::RegionShape::rectangle;
    r.x0 = to_double(tokens[0]);
    r.y0 = to_double(tokens[1]);
    r.x1 = to_double(tokens[2]);
    r.y1 = to_double(tokens[3]);
  } else {
    throw ConfigError("region must be 'disk cx cy r tau I' or 'rect x0 y0 x1 y1 tau I'");
  }
  r.tau = to_double(tokens[tokens.size() - 2]);
  r.intensity = to_double(tokens.back());
  return r;
}

std::string format_region(const phasor::Region& r) {
  if (r.shape == phasor::RegionShape::disk) {
    return "disk " + num(r.cx) + " " + num(r.cy) + " " + num(r.radius) + " " + num(r.tau) + " " +
           num(r.intensity);
  }
  return "rect " + num(r.x0) + " " + num(r.y0) + " " + num(r.x1) + " " + num(r.y1) + " " +
         num(r.tau) + " " + num(r.intensity);
}

}  // namespace

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  RunConfig c = std::move(base);
  std::map<std::size_t, phasor::Region> regions;
  bool saw_region = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    try {
      if (key.starts_with(kRegionPrefix)) {
        const auto index = to_integer<std::size_t>(std::string_view(key).substr(kRegionPrefix.size()));
        if (!regions.emplace(index, parse_region(value)).second) {
          throw ConfigError("duplicate region index");
        }
        saw_region = true;
        continue;
      }
      const auto& table = fields();
      const auto it = std::find_if(table.begin(), table.end(),
                                   [&](const auto& f) { return f.first == key; });
      if (it == table.end()) throw ConfigError("unknown key '" + key + "'");
      it->second.set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (saw_region) {
    c.scene.regions.clear();
    for (auto& [index, region] : regions) c.scene.regions.push_back(region);
  }
  return c;
}

std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(config) + "\n";
  for (std::size_t i = 0; i < config.scene.regions.size(); ++i) {
    out += std::string(kRegionPrefix) + std::to_string(i) + " = " +
           format_region(config.scene.regions[i]) + "\n";
  }
  return out;
}

}  // namespace flimzs::cli
