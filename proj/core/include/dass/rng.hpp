#pragma once

#include <cmath>
#include <cstdint>

#include "dass/tensor.hpp"

namespace dass {

// Counter-based splittable RNG. Draws depend only on (key, counter), so
// streams can be derived per image / per step and replayed regardless of
// execution order. Mixing is the splitmix64 finalizer applied twice.
struct RngStream {
  uint64_t key = 0;
  uint64_t ctr = 0;

  explicit RngStream(uint64_t seed = 0) : key(mix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

  static uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Derive an independent child stream; does not advance this stream.
  RngStream split(uint64_t child) const {
    RngStream s(0);
    s.key = mix64(key ^ mix64(child ^ 0xd1342543de82ef95ull));
    s.ctr = 0;
    return s;
  }

  uint64_t next_u64() { return mix64(key ^ mix64(ctr++)); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(uniform() * static_cast<double>(hi - lo + 1));
  }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <class T>
  void fill_normal(Tensor<T>& t) {
    for (auto& x : t.v) x = static_cast<T>(normal());
  }

  template <class T>
  Tensor<T> normal_like(const Tensor<T>& ref) {
    Tensor<T> out = Tensor<T>::zeros_like(ref);
    fill_normal(out);
    return out;
  }
};

}  // namespace dass
