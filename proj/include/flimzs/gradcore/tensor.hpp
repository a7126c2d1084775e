#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace flimzs::grad {

// Extents of an N x C x H x W tensor. A zero channel count is legal and
// denotes an empty tensor (useful as the identity of channel concatenation).
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t numel() const noexcept { return n * c * h * w; }
  std::size_t spatial() const noexcept { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

// One recorded value in the computation graph. Leaves (data, parameters)
// carry no parents and no backward function.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until backward reaches this node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<T> backward;

  bool is_leaf() const noexcept { return !backward; }
  std::vector<T>& ensure_grad();
};

// Shared handle to a graph node. Copying a Tensor aliases the same storage,
// as with framework tensors; use detach() for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T fill, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  const char* op() const { return node_->op; }

  std::span<const T> values() const { return node_->value; }
  // Writable storage; only meaningful for leaves such as parameters.
  std::span<T> mutable_values() { return node_->value; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // Reverse-mode sweep from a scalar. Leaf gradients accumulate across
  // calls; intermediate gradients are recomputed each time.
  void backward() const;

  Tensor detach() const;

  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Thread-local observer of the discrete state of piecewise-smooth ops
// (ReLU sign pattern, pooling argmax, TV difference signs). Used by the
// gradient checker to skip finite-difference points that straddle a kink.
struct KinkProbe {
  std::uint64_t signature = 0xCBF29CE484222325ULL;
  double min_margin = 1e300;

  void record(std::uint64_t state, double margin) noexcept {
    signature = (signature ^ state) * 0x100000001B3ULL;
    if (margin < min_margin) min_margin = margin;
  }
};

KinkProbe* active_kink_probe() noexcept;

class ScopedKinkProbe {
 public:
  explicit ScopedKinkProbe(KinkProbe& probe) noexcept;
  ~ScopedKinkProbe();
  ScopedKinkProbe(const ScopedKinkProbe&) = delete;
  ScopedKinkProbe& operator=(const ScopedKinkProbe&) = delete;

 private:
  KinkProbe* previous_;
};

namespace detail {

// Wraps freshly computed values into a graph node. Throws NumericError if
// any value is non-finite. The backward function is kept only when some
// parent needs a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, const char* op, std::vector<T> values,
                      std::vector<std::shared_ptr<Node<T>>> parents, BackwardFn<T> backward);

template <typename T>
void check_finite(std::span<const T> values, const char* op);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace flimzs::grad
