#include "flimzs/cli/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>

#include "flimzs/errors.hpp"
#include "flimzs/gradcore/gradcheck.hpp"
#include "flimzs/gradcore/ops.hpp"
#include "flimzs/rng.hpp"
#include "flimzs/zsnet/loss.hpp"

namespace flimzs::cli {

using grad::Parameter;
using grad::Shape;
using grad::Tensor;
using T = double;

namespace {

class Fixture {
 public:
  explicit Fixture(const std::string& name) : rng_(CounterRng(2024).split(name)) {}

  // Uniform values in [lo, hi).
  Tensor<T> uniform(const std::string& name, Shape shape, double lo, double hi, bool trainable) {
    std::vector<T> v(shape.numel());
    for (T& x : v) x = lo + (hi - lo) * rng_.uniform();
    auto t = Tensor<T>::from_values(shape, std::move(v), trainable);
    if (trainable) params_.push_back({name, t});
    return t;
  }

  // Values with magnitude in [0.1, 1) and random sign: away from ReLU kinks.
  Tensor<T> signed_away_from_zero(const std::string& name, Shape shape) {
    std::vector<T> v(shape.numel());
    for (T& x : v) x = (0.1 + 0.9 * rng_.uniform()) * (rng_.uniform() < 0.5 ? -1.0 : 1.0);
    auto t = Tensor<T>::from_values(shape, std::move(v), true);
    params_.push_back({name, t});
    return t;
  }

  std::vector<Parameter<T>>& params() { return params_; }

 private:
  CounterRng rng_;
  std::vector<Parameter<T>> params_;
};

GradCheckEntry finish(const std::string& name, const grad::GradCheckReport& r) {
  GradCheckEntry e{name, r.max_rel_error, r.checked, r.excluded, false};
  e.passed = r.checked > 0 && r.max_rel_error < kGradCheckTolerance;
  return e;
}

GradCheckEntry check(const std::string& name, Fixture& fx, const std::function<Tensor<T>()>& loss,
                     double h, std::size_t max_entries = 0) {
  grad::GradCheckOptions opt;
  opt.h = h;
  opt.max_entries_per_param = max_entries;
  opt.seed = 7;
  return finish(name, grad::grad_check(loss, fx.params(), opt));
}

GradCheckEntry conv2d_check(double h) {
  Fixture fx("conv2d");
  auto x = fx.uniform("x", {1, 3, 7, 7}, -1, 1, true);
  auto w1 = fx.uniform("w1", {4, 3, 3, 3}, -0.5, 0.5, true);
  auto b1 = fx.uniform("b1", {1, 4, 1, 1}, -0.5, 0.5, true);
  auto w2 = fx.uniform("w2", {2, 4, 3, 3}, -0.5, 0.5, true);
  auto b2 = fx.uniform("b2", {1, 2, 1, 1}, -0.5, 0.5, true);
  auto target = fx.uniform("target", {1, 2, 4, 4}, -1, 1, false);
  return check("conv2d", fx, [=] {
    // pad 1 stride 1, then pad 1 stride 2: 7x7 -> 7x7 -> 4x4
    return grad::mse(grad::conv2d(grad::conv2d(x, w1, b1, 1, 1), w2, b2, 2, 1), target);
  }, h);
}

GradCheckEntry conv_transpose2d_check(double h) {
  Fixture fx("conv_transpose2d");
  auto x = fx.uniform("x", {1, 3, 3, 3}, -1, 1, true);
  auto w1 = fx.uniform("w1", {3, 2, 2, 2}, -0.5, 0.5, true);
  auto b1 = fx.uniform("b1", {1, 2, 1, 1}, -0.5, 0.5, true);
  auto w2 = fx.uniform("w2", {2, 2, 3, 3}, -0.5, 0.5, true);  // overlapping windows
  auto b2 = fx.uniform("b2", {1, 2, 1, 1}, -0.5, 0.5, true);
  auto target = fx.uniform("target", {1, 2, 13, 13}, -1, 1, false);
  return check("conv_transpose2d", fx, [=] {
    return grad::mse(
        grad::conv_transpose2d(grad::conv_transpose2d(x, w1, b1, 2), w2, b2, 2), target);
  }, h);
}

GradCheckEntry batchnorm_check(double h) {
  Fixture fx("batchnorm2d");
  auto x = fx.uniform("x", {2, 3, 4, 4}, -1, 1, true);
  auto gamma = fx.uniform("gamma", {1, 3, 1, 1}, 0.5, 1.5, true);
  auto beta = fx.uniform("beta", {1, 3, 1, 1}, -0.5, 0.5, true);
  auto target = fx.uniform("target", {2, 3, 4, 4}, -1, 1, false);
  auto weight = fx.uniform("weight", {2, 3, 4, 4}, -1, 1, false);
  return check("batchnorm2d", fx, [=] {
    // Weighting breaks the symmetry that makes plain mse gradients vanish.
    auto y = grad::batchnorm2d(x, gamma, beta);
    return grad::add(grad::mse(y, target), grad::mse(grad::sub(y, weight), x));
  }, h);
}

GradCheckEntry activation_check(const std::string& name, grad::Activation act, double h) {
  Fixture fx(name);
  auto x = fx.signed_away_from_zero("x", {1, 2, 5, 5});
  auto target = fx.uniform("target", {1, 2, 5, 5}, -1, 1, false);
  return check(name, fx, [=] { return grad::mse(grad::activation(x, act), target); }, h);
}

GradCheckEntry maxpool_check(double h) {
  Fixture fx("maxpool2x2");
  auto x = fx.uniform("x", {1, 2, 6, 6}, -1, 1, true);
  auto target = fx.uniform("target", {1, 2, 3, 3}, -1, 1, false);
  return check("maxpool2x2", fx, [=] { return grad::mse(grad::maxpool2x2(x), target); }, h);
}

GradCheckEntry concat_check(double h) {
  Fixture fx("concat_channels");
  auto a = fx.uniform("a", {1, 2, 3, 3}, -1, 1, true);
  auto b = fx.uniform("b", {1, 3, 3, 3}, -1, 1, true);
  auto target = fx.uniform("target", {1, 5, 3, 3}, -1, 1, false);
  return check("concat_channels", fx,
               [=] { return grad::mse(grad::concat_channels(a, b), target); }, h);
}

GradCheckEntry mse_check(double h) {
  Fixture fx("mse");
  auto a = fx.uniform("a", {1, 1, 6, 6}, -1, 1, true);
  auto b = fx.uniform("b", {1, 1, 6, 6}, -1, 1, true);
  return check("mse", fx, [=] { return grad::mse(a, b); }, h);
}

GradCheckEntry masked_mse_check(double h) {
  Fixture fx("masked_mse");
  auto a = fx.uniform("a", {1, 1, 6, 6}, -1, 1, true);
  auto b = fx.uniform("b", {1, 1, 6, 6}, -1, 1, true);
  std::vector<std::uint8_t> mask(36, 0);
  for (std::size_t i = 0; i < mask.size(); i += 5) mask[i] = 1;
  return check("masked_mse", fx, [=] { return grad::masked_mse(a, b, mask); }, h);
}

GradCheckEntry ssim_check(double h) {
  Fixture fx("ssim");
  auto a = fx.uniform("a", {1, 1, 10, 10}, 0, 1, true);
  auto b = fx.uniform("b", {1, 1, 10, 10}, 0, 1, true);
  return check("ssim", fx, [=] { return grad::ssim(a, b); }, h);
}

GradCheckEntry tv_check(double h) {
  Fixture fx("total_variation");
  auto x = fx.uniform("x", {1, 1, 6, 6}, 0, 1, true);
  return check("total_variation", fx, [=] { return grad::total_variation(x); }, h);
}

GradCheckEntry composite_check(double h) {
  Fixture fx("composite");
  auto net = std::make_shared<zsnet::DualEncoderNet<T>>(11);
  for (auto& p : net->parameters().params()) {
    // Perturb BN affine parameters away from their (1, 0) initialization so
    // their gradients are generic.
    if (p.name.ends_with(".gamma") || p.name.ends_with(".beta")) {
      CounterRng r = CounterRng(5).split(p.name);
      for (T& v : p.tensor.mutable_values()) v += 0.2 * (r.uniform() - 0.5);
    }
    fx.params().push_back(p);
  }
  auto y_g = fx.uniform("y_g", {1, 1, 8, 8}, 0.2, 1.0, false);
  auto y_s = fx.uniform("y_s", {1, 1, 8, 8}, 0.2, 1.0, false);
  auto prior = fx.uniform("prior", {1, 1, 8, 8}, 0.2, 1.0, false);
  return check("composite", fx, [=] {
    return zsnet::composite_loss(net->forward(y_g, y_s), y_g, y_s, prior, zsnet::LossWeights{})
        .total;
  }, h, 3);
}

}  // namespace

const std::vector<std::string>& gradcheck_names() {
  static const std::vector<std::string> names = {
      "conv2d", "conv_transpose2d", "batchnorm2d", "relu",           "leaky_relu", "maxpool2x2",
      "concat_channels", "mse",     "masked_mse",  "ssim", "total_variation", "composite"};
  return names;
}

std::vector<GradCheckEntry> run_gradcheck_suite(const std::optional<std::string>& only,
                                                double h) {
  const auto& names = gradcheck_names();
  if (only && std::find(names.begin(), names.end(), *only) == names.end()) {
    throw ConfigError("unknown gradient check '" + *only + "'");
  }
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  std::vector<GradCheckEntry> out;
  for (const auto& name : names) {
    if (only && *only != name) continue;
    if (name == "conv2d") out.push_back(conv2d_check(h));
    else if (name == "conv_transpose2d") out.push_back(conv_transpose2d_check(h));
    else if (name == "batchnorm2d") out.push_back(batchnorm_check(h));
    else if (name == "relu") out.push_back(activation_check(name, grad::Activation::relu(), h));
    else if (name == "leaky_relu")
      out.push_back(activation_check(name, grad::Activation::leaky_relu(0.1), h));
    else if (name == "maxpool2x2") out.push_back(maxpool_check(h));
    else if (name == "concat_channels") out.push_back(concat_check(h));
    else if (name == "mse") out.push_back(mse_check(h));
    else if (name == "masked_mse") out.push_back(masked_mse_check(h));
    else if (name == "ssim") out.push_back(ssim_check(h));
    else if (name == "total_variation") out.push_back(tv_check(h));
    else if (name == "composite") out.push_back(composite_check(h));
  }
  return out;
}

}  // namespace flimzs::cli
