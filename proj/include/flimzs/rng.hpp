#pragma once

#include <cstdint>
#include <string_view>

namespace flimzs {

// Counter-based 64-bit generator.
//
// A stream is identified by a 64-bit key; the i-th draw is
// splitmix64_mix(key + i * 0x9E3779B97F4A7C15). Child streams are derived
// from a parent key and a tag (a name hashed with FNV-1a, or an integer
// index), so every consumer can own an independent, order-free stream:
//
//   CounterRng root(42);
//   auto noise = root.split("corrupt").split(pixel_index);
//
// Only integer arithmetic defines the raw stream, so it is identical on all
// platforms. Continuous variates are built from it with documented
// transforms (53-bit uniforms, Box-Muller normals, inversion exponentials,
// PTRS Poisson).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed = 0) noexcept;

  CounterRng split(std::string_view name) const noexcept;
  CounterRng split(std::uint64_t index) const noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform integer on [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  double exponential(double mean) noexcept;
  std::uint64_t poisson(double lambda) noexcept;

 private:
  CounterRng(std::uint64_t key, std::uint64_t counter) noexcept
      : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t splitmix64_mix(std::uint64_t z) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

}  // namespace flimzs
