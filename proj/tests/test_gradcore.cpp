#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "flimzs/errors.hpp"
#include "flimzs/gradcore/adam.hpp"
#include "flimzs/gradcore/gradcheck.hpp"
#include "flimzs/gradcore/layers.hpp"
#include "flimzs/gradcore/ops.hpp"
#include "flimzs/metrics/metrics.hpp"
#include "flimzs/rng.hpp"

using namespace flimzs;
using namespace flimzs::grad;
using TD = Tensor<double>;

namespace {

TD random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                 bool requires_grad = false) {
  CounterRng r(seed);
  std::vector<double> v(shape.numel());
  for (double& x : v) x = lo + (hi - lo) * r.uniform();
  return TD::from_values(shape, std::move(v), requires_grad);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Direct seven-loop convolution with zero padding.
std::vector<double> naive_conv(const TD& x, const TD& w, const TD& b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const std::size_t k = ws.h;
  const std::size_t oh = (xs.h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (xs.w + 2 * pad - k) / stride + 1;
  std::vector<double> out(xs.n * ws.n * oh * ow, 0.0);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < ws.n; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = b.defined() ? b.values()[o] : 0.0;
          for (std::size_t c = 0; c < xs.c; ++c)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = long(y * stride + ky) - pad;
                const long ix = long(xx * stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= long(xs.h) || ix >= long(xs.w)) continue;
                acc += x.values()[((n * xs.c + c) * xs.h + iy) * xs.w + ix] *
                       w.values()[((o * xs.c + c) * k + ky) * k + kx];
              }
          out[((n * ws.n + o) * oh + y) * ow + xx] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("shape bookkeeping") {
  const Shape s{2, 3, 4, 5};
  CHECK(s.numel() == 120);
  CHECK(s.spatial() == 20);
  CHECK(TD::zeros(s).numel() == 120);
  CHECK(TD::full({1, 1, 1, 1}, 2.5).item() == 2.5);
  CHECK_THROWS_AS(TD::from_values({1, 1, 2, 2}, {1.0, 2.0}), DimensionError);
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  auto x = random_tensor({1, 1, 3, 3}, 1, -1, 1, true);
  auto target = random_tensor({1, 1, 3, 3}, 2);
  auto loss = mse(x, target);
  loss.backward();
  const std::vector<double> once(x.grad().begin(), x.grad().end());
  loss.backward();
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(2 * once[i]));
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("mse gradient matches its closed form") {
  auto a = random_tensor({1, 1, 2, 3}, 3, -1, 1, true);
  auto b = random_tensor({1, 1, 2, 3}, 4);
  mse(a, b).backward();
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.grad()[i] == doctest::Approx(2.0 * (a.values()[i] - b.values()[i]) / 6.0));
  }
}

TEST_CASE("detach and non-trainable inputs do not receive gradients") {
  auto a = random_tensor({1, 1, 2, 2}, 5, -1, 1, true);
  auto b = random_tensor({1, 1, 2, 2}, 6);
  auto d = a.detach();
  CHECK_FALSE(d.requires_grad());
  mse(add(d, b), b).backward();
  CHECK_FALSE(a.has_grad());
  CHECK_FALSE(b.has_grad());
}

TEST_CASE("conv2d agrees with a direct convolution") {
  for (auto [stride, pad, size] : {std::tuple{1, 1, 6}, std::tuple{2, 1, 7}, std::tuple{1, 0, 5}}) {
    CAPTURE(stride);
    CAPTURE(pad);
    auto x = random_tensor({2, 3, std::size_t(size), std::size_t(size)}, 7);
    auto w = random_tensor({4, 3, 3, 3}, 8);
    auto b = random_tensor({1, 4, 1, 1}, 9);
    const auto got = conv2d(x, w, b, stride, pad);
    const auto want = naive_conv(x, w, b, stride, pad);
    REQUIRE(got.numel() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.values()[i] == doctest::Approx(want[i]));
  }
  // 1x1 fast path without bias.
  auto x = random_tensor({1, 5, 4, 4}, 10);
  auto w = random_tensor({2, 5, 1, 1}, 11);
  const auto got = conv2d(x, w, TD{});
  const auto want = naive_conv(x, w, TD{}, 1, 0);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.values()[i] == doctest::Approx(want[i]));
}

TEST_CASE("conv2d rejects incompatible geometry") {
  auto x = random_tensor({1, 3, 6, 6}, 12);
  CHECK_THROWS_AS(conv2d(x, random_tensor({2, 2, 3, 3}, 13), TD{}), DimensionError);
  CHECK_THROWS_AS(conv2d(x, random_tensor({2, 3, 3, 3}, 13), TD{}, 2, 0), ConfigError);
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  // <conv(x; W), y> == <x, conv_transpose(y; W)> for matching geometry.
  for (auto [k, stride] : {std::pair{2, 2}, std::pair{3, 2}, std::pair{3, 1}}) {
    CAPTURE(k);
    CAPTURE(stride);
    const std::size_t in_h = 4;
    const std::size_t out_h = (in_h - 1) * stride + k;
    auto y = random_tensor({1, 3, in_h, in_h}, 14);                          // coarse
    auto w = random_tensor({3, 2, std::size_t(k), std::size_t(k)}, 15);       // Cin x Cout
    auto x = random_tensor({1, 2, out_h, out_h}, 16);                        // fine
    const auto up = conv_transpose2d(y, w, TD{}, stride);
    REQUIRE(up.shape() == Shape{1, 2, out_h, out_h});
    // As a forward conv from 2 to 3 channels the same tensor is C_out x C_in.
    const auto down = conv2d(x, w, TD{}, stride, 0);
    REQUIRE(down.shape() == y.shape());
    CHECK(dot(up.values(), x.values()) == doctest::Approx(dot(down.values(), y.values())));
  }
}

TEST_CASE("batchnorm output is standardized per channel") {
  auto x = random_tensor({2, 3, 4, 4}, 17, -3, 5);
  auto gamma = TD::full({1, 3, 1, 1}, 1.0);
  auto beta = TD::zeros({1, 3, 1, 1});
  const auto y = batchnorm2d(x, gamma, beta);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t p = 0; p < 16; ++p) {
        const double v = y.values()[(n * 3 + c) * 16 + p];
        s += v;
        s2 += v * v;
      }
    CHECK(std::abs(s / 32) < 1e-12);
    CHECK(s2 / 32 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("activations and their derivative at zero") {
  auto x = TD::from_values({1, 1, 1, 4}, {-2.0, 0.0, 1.5, -0.5}, true);
  const auto r = relu(x);
  CHECK(std::vector<double>(r.values().begin(), r.values().end()) ==
        std::vector<double>{0.0, 0.0, 1.5, 0.0});
  const auto l = leaky_relu(x, 0.1);
  CHECK(l.values()[0] == doctest::Approx(-0.2));
  CHECK(l.values()[3] == doctest::Approx(-0.05));
  mse(l, TD::zeros({1, 1, 1, 4})).backward();
  // d/dx (x^2)/4 through the positive branch at 0 is 0; slope applies below.
  CHECK(x.grad()[0] == doctest::Approx(2 * -0.2 * 0.1 / 4));
  CHECK(x.grad()[2] == doctest::Approx(2 * 1.5 / 4));
  x.zero_grad();
  auto probe = TD::from_values({1, 1, 1, 1}, {0.0}, true);
  scale(relu(probe), 1.0).backward();
  CHECK(probe.grad()[0] == 1.0);
}

TEST_CASE("maxpool routes gradients to the first maximum") {
  auto x = TD::from_values({1, 1, 2, 4}, {1, 3, 5, 5, 3, 2, 0, 4}, true);
  const auto y = maxpool2x2(x);
  CHECK(y.values()[0] == 3);
  CHECK(y.values()[1] == 5);
  mse(y, TD::zeros({1, 1, 1, 2})).backward();
  CHECK(x.grad()[1] == doctest::Approx(3.0));  // 2 * 3 / 2
  CHECK(x.grad()[4] == 0.0);                   // tie with index 1 goes to the first
  CHECK(x.grad()[2] == doctest::Approx(5.0));
  CHECK(x.grad()[3] == 0.0);
  CHECK_THROWS_AS(maxpool2x2(TD::zeros({1, 1, 3, 4})), DimensionError);
}

TEST_CASE("concat and arithmetic ops") {
  auto a = random_tensor({1, 2, 3, 3}, 18, -1, 1, true);
  auto b = random_tensor({1, 1, 3, 3}, 19, -1, 1, true);
  const auto c = concat_channels(a, b);
  REQUIRE(c.shape() == Shape{1, 3, 3, 3});
  CHECK(c.values()[18] == b.values()[0]);
  CHECK(c.values()[17] == a.values()[17]);
  CHECK(add_scalar(b, 2.0).values()[4] == doctest::Approx(b.values()[4] + 2.0));
  CHECK(sub(b, b).values()[3] == 0.0);
  CHECK_THROWS_AS(add(a, b), DimensionError);
}

TEST_CASE("masked mse ignores unmasked positions") {
  auto a = TD::from_values({1, 1, 1, 4}, {1, 2, 3, 4}, true);
  auto b = TD::from_values({1, 1, 1, 4}, {0, 0, 0, 0});
  const std::vector<std::uint8_t> mask{0, 1, 0, 1};
  const auto l = masked_mse(a, b, mask);
  CHECK(l.item() == doctest::Approx((4.0 + 16.0) / 2));
  l.backward();
  CHECK(a.grad()[0] == 0.0);
  CHECK(a.grad()[2] == 0.0);
  CHECK(a.grad()[1] == doctest::Approx(2.0));
  CHECK(a.grad()[3] == doctest::Approx(4.0));
  const std::vector<std::uint8_t> empty(4, 0);
  CHECK_THROWS_AS(masked_mse(a, b, empty), ContractError);
}

TEST_CASE("differentiable ssim matches the independent metric") {
  auto a = random_tensor({1, 1, 12, 10}, 20, 0, 1);
  auto b = random_tensor({1, 1, 12, 10}, 21, 0, 1);
  Plane pa(10, 12), pb(10, 12);
  pa.data.assign(a.values().begin(), a.values().end());
  pb.data.assign(b.values().begin(), b.values().end());
  CHECK(ssim(a, b).item() == doctest::Approx(metrics::ssim_metric(pa, pb)).epsilon(1e-12));
  CHECK(ssim(a, a).item() == doctest::Approx(1.0));
  auto c = TD::full({1, 1, 8, 8}, 0.5), d = TD::full({1, 1, 8, 8}, 1.0);
  CHECK(ssim(c, d).item() == doctest::Approx((1 + 1e-4) / (1.25 + 1e-4)).epsilon(1e-12));
  CHECK_THROWS_AS(ssim(TD::zeros({1, 1, 6, 6}), TD::zeros({1, 1, 6, 6})), DimensionError);
}

TEST_CASE("total variation closed forms") {
  // Horizontal ramp with unit steps: (w - 1) * h differences of 1.
  std::vector<double> ramp(4 * 5);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 5; ++x) ramp[y * 5 + x] = double(x);
  CHECK(total_variation(TD::from_values({1, 1, 4, 5}, ramp)).item() ==
        doctest::Approx(16.0 / 20.0));
  CHECK(total_variation(TD::full({1, 1, 4, 4}, 3.0)).item() == 0.0);
  // Gradient is zero on a constant image.
  auto flat = TD::full({1, 1, 3, 3}, 1.0, true);
  total_variation(flat).backward();
  for (double g : flat.grad()) CHECK(g == 0.0);
}

TEST_CASE("non-finite results raise a numeric error naming the op") {
  auto x = TD::from_values({1, 1, 1, 2}, {1.0, 2.0});
  try {
    scale(x, std::numeric_limits<double>::infinity());
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.op() == "scale");
  }
  auto nan = TD::from_values({1, 1, 1, 2}, {std::nan(""), 0.0});
  CHECK_THROWS_AS(mse(nan, x), NumericError);
}

TEST_CASE("adam step matches the hand-computed update") {
  ParameterStore<double> store;
  auto p = store.add("p", {1, 1, 1, 2});
  p.mutable_values()[0] = 1.0;
  p.mutable_values()[1] = -2.0;
  mse(p, TD::zeros({1, 1, 1, 2})).backward();  // grad = p
  AdamState<double> st;
  st.options.lr = 0.1;
  st.options.weight_decay = 0.01;
  adam_step<double>(store.params(), st);
  // First step: m_hat = g, v_hat = g^2, so the step is lr * sign(g).
  const double decay = 1.0 - 0.1 * 0.01;
  CHECK(p.values()[0] == doctest::Approx(1.0 * decay - 0.1 * 1.0 / (1.0 + 1e-8)));
  CHECK(p.values()[1] == doctest::Approx(-2.0 * decay + 0.1 * 2.0 / (2.0 + 1e-8)));
  CHECK(st.step == 1);

  ParameterStore<double> two;
  auto used = two.add("used", {1, 1, 1, 1});
  auto unused = two.add("unused", {1, 1, 1, 1});
  used.mutable_values()[0] = 1.0;
  unused.mutable_values()[0] = 3.0;
  mse(used, TD::zeros({1, 1, 1, 1})).backward();
  AdamState<double> st2;
  st2.options.weight_decay = 0.5;
  adam_step<double>(two.params(), st2);
  CHECK(unused.values()[0] == 3.0);
  CHECK(used.values()[0] != 1.0);
}

TEST_CASE("adam second step uses bias-corrected moments") {
  ParameterStore<double> store;
  auto p = store.add("p", {1, 1, 1, 1});
  p.mutable_values()[0] = 0.0;
  AdamState<double> st;
  st.options.lr = 0.5;
  const double grads[2] = {1.0, 3.0};
  double m = 0, v = 0, want = 0.0;
  for (int t = 1; t <= 2; ++t) {
    store.zero_grad();
    // d/dp of (g * p) is g: build it as mse against a shifted target.
    auto target = TD::full({1, 1, 1, 1}, p.values()[0] - grads[t - 1] / 2.0);
    mse(p, target).backward();
    adam_step<double>(store.params(), st);
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    want -= 0.5 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p.values()[0] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("parameter store") {
  ParameterStore<float> store;
  store.add("a", {1, 2, 3, 3});
  store.add("b", {1, 2, 1, 1});
  CHECK(store.count() == 20);
  CHECK(store.find("b") != nullptr);
  CHECK(store.find("c") == nullptr);
  CHECK_THROWS_AS(store.add("a", {1, 1, 1, 1}), ContractError);
}

TEST_CASE("plateau scheduler halves after patience and respects the floor") {
  PlateauScheduler s(0.5, 3, 0.1, 1e-4);
  double lr = 1.0;
  lr = s.step(10.0, lr);
  for (int i = 0; i < 3; ++i) lr = s.step(10.0, lr);
  CHECK(lr == 1.0);
  lr = s.step(10.0, lr);
  CHECK(lr == 0.5);
  lr = s.step(5.0, lr);  // improvement resets the counter
  CHECK(s.bad_steps() == 0);
  for (int i = 0; i < 40; ++i) lr = s.step(5.0, lr);
  CHECK(lr == doctest::Approx(0.1));
  // Improvements below the relative threshold count as bad steps.
  PlateauScheduler t(0.5, 0, 1e-6, 1e-2);
  t.step(1.0, 1.0);
  CHECK(t.step(0.995, 1.0) == 0.5);
}

TEST_CASE("he initialization variance and name-derived streams") {
  ParameterStore<double> store;
  const CounterRng rng(3);
  Conv<double> a(store, "a", 16, 32, 3, rng);
  Conv<double> b(store, "b", 16, 32, 3, rng);
  double s2 = 0;
  for (double v : a.weight.values()) s2 += v * v;
  CHECK(s2 / a.weight.numel() == doctest::Approx(2.0 / (16 * 9)).epsilon(0.1));
  CHECK(a.weight.values()[0] != b.weight.values()[0]);
  for (double v : a.bias.values()) CHECK(v == 0.0);
  ParameterStore<double> again;
  Conv<double> a2(again, "a", 16, 32, 3, rng);
  CHECK(a2.weight.values()[5] == a.weight.values()[5]);
}

TEST_CASE("gradient checker accepts correct and rejects broken gradients") {
  ParameterStore<double> store;
  auto w = store.add("w", {2, 1, 3, 3});
  he_normal(w, 9, CounterRng(1), "w");
  auto x = random_tensor({1, 1, 5, 5}, 22);
  auto target = random_tensor({1, 2, 5, 5}, 23);
  auto good = [&] { return mse(conv2d(x, w, TD{}, 1, 1), target); };
  const auto ok = grad_check(good, store.params());
  CHECK(ok.max_rel_error < 1e-7);
  CHECK(ok.checked == 18);

  // A term whose gradient never reaches w.
  auto broken = [&] { return add(good(), mse(w.detach(), TD::zeros(w.shape()))); };
  CHECK(grad_check(broken, store.params()).max_rel_error > 1e-3);

  // An unused parameter is reported as dead rather than checked.
  store.add("unused", {1, 1, 1, 1});
  const auto dead = grad_check(good, store.params());
  REQUIRE(dead.zero_grad_params.size() == 1);
  CHECK(dead.zero_grad_params[0] == "unused");
}

TEST_CASE("gradient checker skips points that straddle a kink") {
  ParameterStore<double> store;
  auto p = store.add("p", {1, 1, 1, 2});
  p.mutable_values()[0] = 5e-5;  // within h of the ReLU kink
  p.mutable_values()[1] = 0.7;
  auto loss = [&] { return mse(relu(p), TD::zeros(p.shape())); };
  const auto r = grad_check(loss, store.params());
  CHECK(r.excluded == 1);
  CHECK(r.checked == 1);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("float and double graphs agree") {
  auto xd = random_tensor({1, 2, 6, 6}, 24);
  auto wd = random_tensor({3, 2, 3, 3}, 25);
  std::vector<float> xf(xd.values().begin(), xd.values().end());
  std::vector<float> wf(wd.values().begin(), wd.values().end());
  const auto yd = relu(conv2d(xd, wd, TD{}, 1, 1));
  const auto yf = relu(conv2d(Tensor<float>::from_values(xd.shape(), xf),
                              Tensor<float>::from_values(wd.shape(), wf), Tensor<float>{}, 1, 1));
  for (std::size_t i = 0; i < yd.numel(); ++i) {
    CHECK(yf.values()[i] == doctest::Approx(yd.values()[i]).epsilon(1e-5));
  }
}
