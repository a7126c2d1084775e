#include "flimzs/gradcore/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <type_traits>
#include <unordered_set>

#include "flimzs/errors.hpp"

namespace flimzs::grad {

std::string Shape::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

template <typename T>
std::vector<T>& Node<T>::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), T(0));
  return grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
  return from_values(shape, std::vector<T>(shape.numel(), fill), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_values(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != shape.numel()) {
    throw DimensionError("tensor of shape " + shape.str() + " given " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on a tensor of shape " + shape().str());
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_values(shape(), node_->value, false);
}

template <typename T>
void Tensor<T>::backward() const {
  if (!defined() || numel() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* node : order) {
    if (!node->is_leaf()) node->grad.clear();
  }
  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->is_leaf() || node->grad.empty()) continue;
    node->backward(*node);
  }
}

namespace {
thread_local KinkProbe* g_probe = nullptr;
}

KinkProbe* active_kink_probe() noexcept { return g_probe; }

ScopedKinkProbe::ScopedKinkProbe(KinkProbe& probe) noexcept : previous_(g_probe) {
  g_probe = &probe;
}

ScopedKinkProbe::~ScopedKinkProbe() { g_probe = previous_; }

namespace detail {

template <typename T>
void check_finite(std::span<const T> values, const char* op) {
  // Inf and nan have every exponent bit set.
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits mask = sizeof(T) == 4 ? Bits(0x7f800000u) : Bits(0x7ff0000000000000ull);
  bool bad = false;
  for (T v : values) bad |= (std::bit_cast<Bits>(v) & mask) == mask;
  if (bad) throw NumericError(op, std::string("non-finite value produced by ") + op);
}

template <typename T>
Tensor<T> make_result(Shape shape, const char* op, std::vector<T> values,
                      std::vector<std::shared_ptr<Node<T>>> parents, BackwardFn<T> backward) {
  check_finite<T>(values, op);
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(values);
  node->op = op;
  for (const auto& p : parents) {
    if (p && p->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template Tensor<float> make_result(Shape, const char*, std::vector<float>,
                                   std::vector<std::shared_ptr<Node<float>>>, BackwardFn<float>);
template Tensor<double> make_result(Shape, const char*, std::vector<double>,
                                    std::vector<std::shared_ptr<Node<double>>>,
                                    BackwardFn<double>);
template void check_finite(std::span<const float>, const char*);
template void check_finite(std::span<const double>, const char*);

}  // namespace detail

template struct Node<float>;
template struct Node<double>;
template class Tensor<float>;
template class Tensor<double>;

}  // namespace flimzs::grad
