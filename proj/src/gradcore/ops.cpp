#include "flimzs/gradcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "flimzs/errors.hpp"

namespace flimzs::grad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Geometry of a strided, zero-padded k x k sliding window over a
// channels x in_h x in_w image, producing out_h x out_w positions.
struct Window {
  std::size_t channels, in_h, in_w, k, stride, pad, out_h, out_w;
  std::size_t rows() const { return channels * k * k; }
  std::size_t cols() const { return out_h * out_w; }
};

// Output columns whose stride-1 input column ox + kx - pad lies inside the image.
inline std::pair<std::size_t, std::size_t> valid_span(const Window& g, std::size_t kx) {
  const std::size_t lo = g.pad > kx ? g.pad - kx : 0;
  const std::size_t hi = std::min(g.out_w, g.in_w + g.pad - kx);
  return {std::min(lo, hi), hi};
}

// Reused per-thread buffers; slot 0 and 1 may be live at the same time.
template <typename T>
T* scratch(int slot, std::size_t size) {
  thread_local std::vector<T> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b.data();
}

template <typename T>
void im2col(const T* img, const Window& g, T* cols) {
  const std::size_t positions = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* dst = cols + ((c * g.k + ky) * g.k + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          T* row = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
            std::fill_n(row, g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          if (g.stride == 1) {
            const auto [lo, hi] = valid_span(g, kx);
            std::fill_n(row, lo, T(0));
            std::copy(src + lo + kx - g.pad, src + hi + kx - g.pad, row + lo);
            std::fill(row + hi, row + g.out_w, T(0));
            continue;
          }
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w))
                          ? T(0)
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into the image.
template <typename T>
void col2im(const T* cols, const Window& g, T* img) {
  const std::size_t positions = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* src = cols + ((c * g.k + ky) * g.k + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          const T* row = src + oy * g.out_w;
          if (g.stride == 1) {
            const auto [lo, hi] = valid_span(g, kx);
            T* d = dst + kx - g.pad;
            for (std::size_t ox = lo; ox < hi; ++ox) d[ox] += row[ox];
            continue;
          }
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            dst[static_cast<std::size_t>(ix)] += row[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Window& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

void require(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined operand");
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + a.shape().str() +
                                      " vs " + b.shape().str());
}

template <typename T>
void require_single_channel(const Tensor<T>& a, const char* op) {
  require(a.shape().c == 1, std::string(op) + ": expects a single-channel image, got " +
                                a.shape().str());
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolutions

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding) {
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride must be >= 1, padding >= 0");
  const Shape& in = input.shape();
  const Shape& ws = weight.shape();
  require(ws.h == ws.w, "conv2d: kernel must be square");
  require(ws.c == in.c, "conv2d: input has " + std::to_string(in.c) +
                            " channels, weight expects " + std::to_string(ws.c));
  require(!bias.defined() || bias.numel() == ws.n, "conv2d: bias length != output channels");
  const std::size_t k = ws.h;
  const auto s = static_cast<std::size_t>(stride);
  const auto p = static_cast<std::size_t>(padding);
  require(in.h + 2 * p >= k && in.w + 2 * p >= k, "conv2d: kernel larger than padded input");
  if ((in.h + 2 * p - k) % s != 0 || (in.w + 2 * p - k) % s != 0) {
    throw ConfigError("conv2d: output size is not integral for input " + in.str());
  }
  const Window g{in.c, in.h, in.w, k, s, p, (in.h + 2 * p - k) / s + 1,
                 (in.w + 2 * p - k) / s + 1};
  const std::size_t cout = ws.n;
  const Shape out_shape{in.n, cout, g.out_h, g.out_w};

  std::vector<T> out(out_shape.numel());
  T* cols = is_pointwise(g) ? nullptr : scratch<T>(0, g.rows() * g.cols());
  ConstMatMap<T> wmat(weight.values().data(), cout, g.rows());
  for (std::size_t n = 0; n < in.n; ++n) {
    const T* img = input.values().data() + n * in.c * in.h * in.w;
    const T* colp = img;
    if (!is_pointwise(g)) {
      im2col(img, g, cols);
      colp = cols;
    }
    MatMap<T> o(out.data() + n * cout * g.cols(), cout, g.cols());
    o.noalias() = wmat * ConstMatMap<T>(colp, g.rows(), g.cols());
    if (bias.defined()) {
      for (std::size_t c = 0; c < cout; ++c) o.row(c).array() += bias.values()[c];
    }
  }

  NodePtr<T> xin = input.node(), wn = weight.node(), bn = bias.node();
  auto backward = [xin, wn, bn, g, cout](Node<T>& self) {
    const std::size_t batch = xin->shape.n;
    const bool need_w = wn->requires_grad;
    const bool need_b = bn && bn->requires_grad;
    const bool need_x = xin->requires_grad;
    T* cols = need_w && !is_pointwise(g) ? scratch<T>(0, g.rows() * g.cols()) : nullptr;
    T* dcols = need_x && !is_pointwise(g) ? scratch<T>(1, g.rows() * g.cols()) : nullptr;
    ConstMatMap<T> wmat(wn->value.data(), cout, g.rows());
    const std::size_t in_stride = g.channels * g.in_h * g.in_w;
    for (std::size_t n = 0; n < batch; ++n) {
      ConstMatMap<T> dout(self.grad.data() + n * cout * g.cols(), cout, g.cols());
      if (need_w) {
        const T* img = xin->value.data() + n * in_stride;
        const T* colp = img;
        if (!is_pointwise(g)) {
          im2col(img, g, cols);
          colp = cols;
        }
        MatMap<T> dw(wn->ensure_grad().data(), cout, g.rows());
        dw.noalias() += dout * ConstMatMap<T>(colp, g.rows(), g.cols()).transpose();
      }
      if (need_b) {
        auto& db = bn->ensure_grad();
        // Plain loop: Eigen's vectorized reductions peel by address, which
        // would make the rounding depend on allocation alignment.
        for (std::size_t c = 0; c < cout; ++c) {
          const T* row = self.grad.data() + (n * cout + c) * g.cols();
          T acc = T(0);
          for (std::size_t k = 0; k < g.cols(); ++k) acc += row[k];
          db[c] += acc;
        }
      }
      if (need_x) {
        T* dimg = xin->ensure_grad().data() + n * in_stride;
        if (is_pointwise(g)) {
          MatMap<T>(dimg, g.rows(), g.cols()).noalias() += wmat.transpose() * dout;
        } else {
          MatMap<T>(dcols, g.rows(), g.cols()).noalias() = wmat.transpose() * dout;
          col2im(dcols, g, dimg);
        }
      }
    }
  };
  std::vector<NodePtr<T>> parents{xin, wn};
  if (bn) parents.push_back(bn);
  return detail::make_result<T>(out_shape, "conv2d", std::move(out), std::move(parents),
                                backward);
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, int stride) {
  if (stride < 1) throw ConfigError("conv_transpose2d: stride must be >= 1");
  const Shape& in = input.shape();
  const Shape& ws = weight.shape();
  require(ws.h == ws.w, "conv_transpose2d: kernel must be square");
  require(ws.n == in.c, "conv_transpose2d: input has " + std::to_string(in.c) +
                            " channels, weight expects " + std::to_string(ws.n));
  const std::size_t cout = ws.c;
  require(!bias.defined() || bias.numel() == cout,
          "conv_transpose2d: bias length != output channels");
  const std::size_t k = ws.h;
  const auto s = static_cast<std::size_t>(stride);
  const std::size_t out_h = (in.h - 1) * s + k;
  const std::size_t out_w = (in.w - 1) * s + k;
  // Columns of the output image under the matching forward convolution.
  const Window g{cout, out_h, out_w, k, s, 0, in.h, in.w};
  const Shape out_shape{in.n, cout, out_h, out_w};

  std::vector<T> out(out_shape.numel(), T(0));
  T* cols = scratch<T>(0, g.rows() * g.cols());
  ConstMatMap<T> wmat(weight.values().data(), in.c, g.rows());
  for (std::size_t n = 0; n < in.n; ++n) {
    ConstMatMap<T> x(input.values().data() + n * in.c * g.cols(), in.c, g.cols());
    MatMap<T>(cols, g.rows(), g.cols()).noalias() = wmat.transpose() * x;
    T* o = out.data() + n * cout * out_h * out_w;
    col2im(cols, g, o);
    if (bias.defined()) {
      for (std::size_t c = 0; c < cout; ++c) {
        T* plane = o + c * out_h * out_w;
        for (std::size_t i = 0; i < out_h * out_w; ++i) plane[i] += bias.values()[c];
      }
    }
  }

  NodePtr<T> xin = input.node(), wn = weight.node(), bn = bias.node();
  const std::size_t cin = in.c;
  auto backward = [xin, wn, bn, g, cin](Node<T>& self) {
    const std::size_t batch = xin->shape.n;
    const std::size_t out_plane = g.in_h * g.in_w;
    T* dcols = scratch<T>(1, g.rows() * g.cols());
    ConstMatMap<T> wmat(wn->value.data(), cin, g.rows());
    for (std::size_t n = 0; n < batch; ++n) {
      const T* dout = self.grad.data() + n * g.channels * out_plane;
      if (bn && bn->requires_grad) {
        auto& db = bn->ensure_grad();
        for (std::size_t c = 0; c < g.channels; ++c) {
          T acc = 0;
          for (std::size_t i = 0; i < out_plane; ++i) acc += dout[c * out_plane + i];
          db[c] += acc;
        }
      }
      if (!wn->requires_grad && !xin->requires_grad) continue;
      im2col(dout, g, dcols);
      ConstMatMap<T> dc(dcols, g.rows(), g.cols());
      if (wn->requires_grad) {
        ConstMatMap<T> x(xin->value.data() + n * cin * g.cols(), cin, g.cols());
        MatMap<T>(wn->ensure_grad().data(), cin, g.rows()).noalias() += x * dc.transpose();
      }
      if (xin->requires_grad) {
        MatMap<T>(xin->ensure_grad().data() + n * cin * g.cols(), cin, g.cols()).noalias() +=
            wmat * dc;
      }
    }
  };
  std::vector<NodePtr<T>> parents{xin, wn};
  if (bn) parents.push_back(bn);
  return detail::make_result<T>(out_shape, "conv_transpose2d", std::move(out),
                                std::move(parents), backward);
}

// ---------------------------------------------------------------------------
// Normalization and activations

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      double eps) {
  if (!(eps > 0.0)) throw ConfigError("batchnorm2d: eps must be positive");
  const Shape& in = input.shape();
  require(gamma.numel() == in.c && beta.numel() == in.c,
          "batchnorm2d: gamma/beta length must equal channel count " + std::to_string(in.c));
  const std::size_t plane = in.spatial();
  const std::size_t count = in.n * plane;
  std::vector<T> xhat(in.numel());
  std::vector<T> inv_std(in.c);
  std::vector<T> out(in.numel());
  const T* x = input.values().data();
  for (std::size_t c = 0; c < in.c; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < in.n; ++n) {
      const T* src = x + (n * in.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
    }
    const double mu = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t n = 0; n < in.n; ++n) {
      const T* src = x + (n * in.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = src[i] - mu;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[c] = static_cast<T>(istd);
    const T gm = gamma.values()[c];
    const T bt = beta.values()[c];
    for (std::size_t n = 0; n < in.n; ++n) {
      const std::size_t off = (n * in.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = static_cast<T>((x[off + i] - mu) * istd);
        xhat[off + i] = xh;
        out[off + i] = gm * xh + bt;
      }
    }
  }

  NodePtr<T> xin = input.node(), gn = gamma.node(), bn = beta.node();
  auto backward = [xin, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Node<T>& self) {
    const Shape& sh = xin->shape;
    const std::size_t plane = sh.spatial();
    const double count = static_cast<double>(sh.n * plane);
    for (std::size_t c = 0; c < sh.c; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t n = 0; n < sh.n; ++n) {
        const std::size_t off = (n * sh.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += self.grad[off + i];
          sum_dy_xhat += static_cast<double>(self.grad[off + i]) * xhat[off + i];
        }
      }
      if (gn->requires_grad) gn->ensure_grad()[c] += static_cast<T>(sum_dy_xhat);
      if (bn->requires_grad) bn->ensure_grad()[c] += static_cast<T>(sum_dy);
      if (xin->requires_grad) {
        auto& dx = xin->ensure_grad();
        const double k = gn->value[c] * static_cast<double>(inv_std[c]) / count;
        for (std::size_t n = 0; n < sh.n; ++n) {
          const std::size_t off = (n * sh.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            dx[off + i] += static_cast<T>(
                k * (count * self.grad[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat));
          }
        }
      }
    }
  };
  return detail::make_result<T>(in, "batchnorm2d", std::move(out), {xin, gn, bn}, backward);
}

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind) {
  const bool leaky = kind.kind == Activation::Kind::leaky_relu;
  if (leaky && !(kind.slope > 0.0 && kind.slope < 1.0)) {
    throw ConfigError("leaky_relu: slope must lie in (0, 1)");
  }
  const T neg = leaky ? static_cast<T>(kind.slope) : T(0);
  const auto x = input.values();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : x[i] * neg;
  if (KinkProbe* probe = active_kink_probe()) {
    for (T v : x) probe->record(v >= T(0), std::fabs(static_cast<double>(v)));
  }
  NodePtr<T> xin = input.node();
  auto backward = [xin, neg](Node<T>& self) {
    auto& dx = xin->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += xin->value[i] >= T(0) ? self.grad[i] : self.grad[i] * neg;
    }
  };
  return detail::make_result<T>(input.shape(), leaky ? "leaky_relu" : "relu", std::move(out),
                                {xin}, backward);
}

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& input) {
  const Shape& in = input.shape();
  require(in.h % 2 == 0 && in.w % 2 == 0,
          "maxpool2x2: spatial extents must be even, got " + in.str());
  const Shape out_shape{in.n, in.c, in.h / 2, in.w / 2};
  std::vector<T> out(out_shape.numel());
  std::vector<std::uint32_t> argmax(out_shape.numel());
  const T* x = input.values().data();
  KinkProbe* probe = active_kink_probe();
  for (std::size_t nc = 0; nc < in.n * in.c; ++nc) {
    const T* src = x + nc * in.spatial();
    for (std::size_t oy = 0; oy < out_shape.h; ++oy) {
      for (std::size_t ox = 0; ox < out_shape.w; ++ox) {
        const std::size_t cand[4] = {2 * oy * in.w + 2 * ox, 2 * oy * in.w + 2 * ox + 1,
                                     (2 * oy + 1) * in.w + 2 * ox,
                                     (2 * oy + 1) * in.w + 2 * ox + 1};
        std::size_t best = 0;
        for (std::size_t q = 1; q < 4; ++q) {
          if (src[cand[q]] > src[cand[best]]) best = q;
        }
        const std::size_t o = nc * out_shape.spatial() + oy * out_shape.w + ox;
        out[o] = src[cand[best]];
        argmax[o] = static_cast<std::uint32_t>(nc * in.spatial() + cand[best]);
        if (probe) {
          double gap = 1e300;
          // Exact ties are left to the signature: a perturbation that
          // breaks one moves the argmax.
          for (std::size_t q = 0; q < 4; ++q) {
            const double d = static_cast<double>(src[cand[best]] - src[cand[q]]);
            if (d > 0.0) gap = std::min(gap, d);
          }
          probe->record(best, gap);
        }
      }
    }
  }
  NodePtr<T> xin = input.node();
  auto backward = [xin, argmax = std::move(argmax)](Node<T>& self) {
    auto& dx = xin->ensure_grad();
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += self.grad[o];
  };
  return detail::make_result<T>(out_shape, "maxpool2x2", std::move(out), {xin}, backward);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w,
          "concat_channels: operands disagree on batch or spatial extents (" + sa.str() +
              " vs " + sb.str() + ")");
  const Shape out_shape{sa.n, sa.c + sb.c, sa.h, sa.w};
  const std::size_t na = sa.c * sa.spatial();
  const std::size_t nb = sb.c * sb.spatial();
  std::vector<T> out(out_shape.numel());
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.values().data() + n * na, na, out.data() + n * (na + nb));
    std::copy_n(b.values().data() + n * nb, nb, out.data() + n * (na + nb) + na);
  }
  NodePtr<T> an = a.node(), bnode = b.node();
  auto backward = [an, bnode, na, nb](Node<T>& self) {
    const std::size_t batch = an->shape.n;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* g = self.grad.data() + n * (na + nb);
      if (an->requires_grad) {
        T* da = an->ensure_grad().data() + n * na;
        for (std::size_t i = 0; i < na; ++i) da[i] += g[i];
      }
      if (bnode->requires_grad && nb > 0) {
        T* db = bnode->ensure_grad().data() + n * nb;
        for (std::size_t i = 0; i < nb; ++i) db[i] += g[na + i];
      }
    }
  };
  return detail::make_result<T>(out_shape, "concat_channels", std::move(out), {an, bnode},
                                backward);
}

// ---------------------------------------------------------------------------
// Losses

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mse");
  require(a.numel() > 0, "mse: empty operands");
  const auto x = a.values();
  const auto y = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    acc += d * d;
  }
  const double count = static_cast<double>(x.size());
  NodePtr<T> an = a.node(), bnode = b.node();
  auto backward = [an, bnode, count](Node<T>& self) {
    const double g = 2.0 * self.grad[0] / count;
    const auto& x = an->value;
    const auto& y = bnode->value;
    if (an->requires_grad) {
      auto& da = an->ensure_grad();
      for (std::size_t i = 0; i < x.size(); ++i) da[i] += static_cast<T>(g * (x[i] - y[i]));
    }
    if (bnode->requires_grad) {
      auto& db = bnode->ensure_grad();
      for (std::size_t i = 0; i < x.size(); ++i) db[i] -= static_cast<T>(g * (x[i] - y[i]));
    }
  };
  return detail::make_result<T>(Shape{}, "mse", {static_cast<T>(acc / count)}, {an, bnode},
                                backward);
}

template <typename T>
Tensor<T> masked_mse(const Tensor<T>& pred, const Tensor<T>& target,
                     std::span<const std::uint8_t> mask) {
  require_same_shape(pred, target, "masked_mse");
  require(mask.size() == pred.numel(), "masked_mse: mask length != element count");
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  std::size_t count = 0;
  double acc = 0.0;
  const auto x = pred.values();
  const auto y = target.values();
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    ++count;
    const double d = static_cast<double>(x[i]) - y[i];
    acc += d * d;
  }
  if (count == 0) throw ContractError("masked_mse: mask selects no positions");
  NodePtr<T> pn = pred.node(), tn = target.node();
  const double n = static_cast<double>(count);
  auto backward = [pn, tn, m = std::move(m), n](Node<T>& self) {
    const double g = 2.0 * self.grad[0] / n;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!m[i]) continue;
      const double d = static_cast<double>(pn->value[i]) - tn->value[i];
      if (pn->requires_grad) pn->ensure_grad()[i] += static_cast<T>(g * d);
      if (tn->requires_grad) tn->ensure_grad()[i] -= static_cast<T>(g * d);
    }
  };
  return detail::make_result<T>(Shape{}, "masked_mse", {static_cast<T>(acc / n)}, {pn, tn},
                                backward);
}

template <typename T>
Tensor<T> ssim(const Tensor<T>& a, const Tensor<T>& b, int window, double c1, double c2) {
  require_same_shape(a, b, "ssim");
  require_single_channel(a, "ssim");
  if (window < 1 || window % 2 == 0) throw ConfigError("ssim: window must be odd and positive");
  const Shape& sh = a.shape();
  const auto win = static_cast<std::size_t>(window);
  require(sh.h >= win && sh.w >= win, "ssim: image " + sh.str() + " smaller than " +
                                          std::to_string(win) + "x" + std::to_string(win) +
                                          " window");
  const std::size_t wy = sh.h - win + 1;
  const std::size_t wx = sh.w - win + 1;
  const std::size_t windows = sh.n * wy * wx;
  const double inv_n = 1.0 / static_cast<double>(win * win);

  // Per-window partial derivatives of SSIM w.r.t. the raw moments
  // (mean_a, mean_b, E[a^2], E[b^2], E[ab]).
  std::vector<double> d_ma(windows), d_mb(windows), d_saa(windows), d_sbb(windows),
      d_sab(windows);
  const auto x = a.values();
  const auto y = b.values();
  double total = 0.0;
  for (std::size_t n = 0; n < sh.n; ++n) {
    const T* pa = x.data() + n * sh.spatial();
    const T* pb = y.data() + n * sh.spatial();
    for (std::size_t i = 0; i < wy; ++i) {
      for (std::size_t j = 0; j < wx; ++j) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (std::size_t u = 0; u < win; ++u) {
          const T* ra = pa + (i + u) * sh.w + j;
          const T* rb = pb + (i + u) * sh.w + j;
          for (std::size_t v = 0; v < win; ++v) {
            const double va = ra[v], vb = rb[v];
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const double ma = sa * inv_n, mb = sb * inv_n;
        const double eaa = saa * inv_n, ebb = sbb * inv_n, eab = sab * inv_n;
        const double a1 = 2 * ma * mb + c1;
        const double a2 = 2 * (eab - ma * mb) + c2;
        const double b1 = ma * ma + mb * mb + c1;
        const double b2 = (eaa - ma * ma) + (ebb - mb * mb) + c2;
        const double s = a1 * a2 / (b1 * b2);
        total += s;
        const std::size_t w = (n * wy + i) * wx + j;
        d_ma[w] = s / a1 * 2 * mb - s / a2 * 2 * mb - s / b1 * 2 * ma + s / b2 * 2 * ma;
        d_mb[w] = s / a1 * 2 * ma - s / a2 * 2 * ma - s / b1 * 2 * mb + s / b2 * 2 * mb;
        d_saa[w] = -s / b2;
        d_sbb[w] = -s / b2;
        d_sab[w] = 2 * s / a2;
      }
    }
  }
  const double value = total / static_cast<double>(windows);

  NodePtr<T> an = a.node(), bnode = b.node();
  auto backward = [an, bnode, win, wy, wx, windows, inv_n, d_ma = std::move(d_ma),
                   d_mb = std::move(d_mb), d_saa = std::move(d_saa), d_sbb = std::move(d_sbb),
                   d_sab = std::move(d_sab)](Node<T>& self) {
    const Shape& sh = an->shape;
    const double scale = self.grad[0] * inv_n / static_cast<double>(windows);
    std::vector<double> ga(an->requires_grad ? an->value.size() : 0, 0.0);
    std::vector<double> gb(bnode->requires_grad ? bnode->value.size() : 0, 0.0);
    for (std::size_t n = 0; n < sh.n; ++n) {
      const std::size_t base = n * sh.spatial();
      for (std::size_t i = 0; i < wy; ++i) {
        for (std::size_t j = 0; j < wx; ++j) {
          const std::size_t w = (n * wy + i) * wx + j;
          for (std::size_t u = 0; u < win; ++u) {
            for (std::size_t v = 0; v < win; ++v) {
              const std::size_t p = base + (i + u) * sh.w + j + v;
              const double va = an->value[p], vb = bnode->value[p];
              if (!ga.empty()) ga[p] += d_ma[w] + 2 * va * d_saa[w] + vb * d_sab[w];
              if (!gb.empty()) gb[p] += d_mb[w] + 2 * vb * d_sbb[w] + va * d_sab[w];
            }
          }
        }
      }
    }
    if (!ga.empty()) {
      auto& da = an->ensure_grad();
      for (std::size_t p = 0; p < ga.size(); ++p) da[p] += static_cast<T>(scale * ga[p]);
    }
    if (!gb.empty()) {
      auto& db = bnode->ensure_grad();
      for (std::size_t p = 0; p < gb.size(); ++p) db[p] += static_cast<T>(scale * gb[p]);
    }
  };
  return detail::make_result<T>(Shape{}, "ssim", {static_cast<T>(value)}, {an, bnode},
                                backward);
}

template <typename T>
Tensor<T> total_variation(const Tensor<T>& x) {
  require_single_channel(x, "total_variation");
  const Shape& sh = x.shape();
  require(sh.numel() > 0, "total_variation: empty image");
  const auto v = x.values();
  KinkProbe* probe = active_kink_probe();
  double acc = 0.0;
  for (std::size_t n = 0; n < sh.n; ++n) {
    const T* p = v.data() + n * sh.spatial();
    for (std::size_t r = 0; r < sh.h; ++r) {
      for (std::size_t c = 0; c < sh.w; ++c) {
        const T here = p[r * sh.w + c];
        if (c + 1 < sh.w) {
          const double d = static_cast<double>(p[r * sh.w + c + 1]) - here;
          acc += std::fabs(d);
          if (probe) probe->record((d > 0) - (d < 0) + 1, std::fabs(d));
        }
        if (r + 1 < sh.h) {
          const double d = static_cast<double>(p[(r + 1) * sh.w + c]) - here;
          acc += std::fabs(d);
          if (probe) probe->record((d > 0) - (d < 0) + 1, std::fabs(d));
        }
      }
    }
  }
  const double count = static_cast<double>(sh.numel());
  NodePtr<T> xn = x.node();
  auto backward = [xn, count](Node<T>& self) {
    const Shape& sh = xn->shape;
    const T g = static_cast<T>(self.grad[0] / count);
    auto& dx = xn->ensure_grad();
    const auto sign = [](T d) { return static_cast<T>((d > T(0)) - (d < T(0))); };
    for (std::size_t n = 0; n < sh.n; ++n) {
      const T* p = xn->value.data() + n * sh.spatial();
      T* dp = dx.data() + n * sh.spatial();
      for (std::size_t r = 0; r < sh.h; ++r) {
        for (std::size_t c = 0; c < sh.w; ++c) {
          const std::size_t i = r * sh.w + c;
          if (c + 1 < sh.w) {
            const T s = sign(p[i + 1] - p[i]) * g;
            dp[i + 1] += s;
            dp[i] -= s;
          }
          if (r + 1 < sh.h) {
            const T s = sign(p[i + sh.w] - p[i]) * g;
            dp[i + sh.w] += s;
            dp[i] -= s;
          }
        }
      }
    }
  };
  return detail::make_result<T>(Shape{}, "total_variation", {static_cast<T>(acc / count)}, {xn},
                                backward);
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  NodePtr<T> an = a.node(), bnode = b.node();
  auto backward = [an, bnode](Node<T>& self) {
    for (Node<T>* p : {an.get(), bnode.get()}) {
      if (!p->requires_grad) continue;
      auto& d = p->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  };
  return detail::make_result<T>(a.shape(), "add", std::move(out), {an, bnode}, backward);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  NodePtr<T> an = a.node(), bnode = b.node();
  auto backward = [an, bnode](Node<T>& self) {
    if (an->requires_grad) {
      auto& d = an->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
    if (bnode->requires_grad) {
      auto& d = bnode->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.grad[i];
    }
  };
  return detail::make_result<T>(a.shape(), "sub", std::move(out), {an, bnode}, backward);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
  const T f = static_cast<T>(factor);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * f;
  NodePtr<T> an = a.node();
  auto backward = [an, f](Node<T>& self) {
    auto& d = an->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * f;
  };
  return detail::make_result<T>(a.shape(), "scale", std::move(out), {an}, backward);
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, double offset) {
  const T o = static_cast<T>(offset);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + o;
  NodePtr<T> an = a.node();
  auto backward = [an](Node<T>& self) {
    auto& d = an->ensure_grad();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  };
  return detail::make_result<T>(a.shape(), "add_scalar", std::move(out), {an}, backward);
}

#define FLIMZS_INSTANTIATE_OPS(T)                                                            \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                      int);                                                  \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                 double);                                                    \
  template Tensor<T> activation(const Tensor<T>&, Activation);                               \
  template Tensor<T> maxpool2x2(const Tensor<T>&);                                           \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> masked_mse(const Tensor<T>&, const Tensor<T>&,                          \
                                std::span<const std::uint8_t>);                              \
  template Tensor<T> ssim(const Tensor<T>&, const Tensor<T>&, int, double, double);          \
  template Tensor<T> total_variation(const Tensor<T>&);                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, double);                                        \
  template Tensor<T> add_scalar(const Tensor<T>&, double);

FLIMZS_INSTANTIATE_OPS(float)
FLIMZS_INSTANTIATE_OPS(double)

}  // namespace flimzs::grad
