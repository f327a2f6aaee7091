#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <new>
#include <vector>

namespace dass {

// 64-byte-aligned storage for every buffer Eigen maps. With a fixed base
// alignment, vectorized kernels take the same code path on every run, so
// results are bit-reproducible regardless of heap layout.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }
  bool operator==(const AlignedAllocator&) const { return true; }
  bool operator!=(const AlignedAllocator&) const { return false; }
};

template <class T>
using AVec = std::vector<T, AlignedAllocator<T>>;

// Dense NCHW tensor. The whole pipeline runs on Tensor<float>;
// Tensor<double> exists for gradient-check mode.
template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  AVec<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

  size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  T& at(int ni, int ci, int y, int x) {
    return v[((static_cast<size_t>(ni) * c + ci) * h + y) * w + x];
  }
  const T& at(int ni, int ci, int y, int x) const {
    return v[((static_cast<size_t>(ni) * c + ci) * h + y) * w + x];
  }

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w); }

  Tensor slice(int ni) const {
    Tensor out(1, c, h, w);
    size_t stride = static_cast<size_t>(c) * h * w;
    std::copy(v.begin() + ni * stride, v.begin() + (ni + 1) * stride, out.v.begin());
    return out;
  }

  void clip(T lo, T hi) {
    for (auto& x : v) x = x < lo ? lo : (x > hi ? hi : x);
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

// Per-pixel integer class ids, H x W.
struct LabelMap {
  int h = 0, w = 0;
  std::vector<uint8_t> v;

  LabelMap() = default;
  LabelMap(int h_, int w_) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, 0) {}

  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
  size_t size() const { return v.size(); }
  bool operator==(const LabelMap& o) const { return h == o.h && w == o.w && v == o.v; }
};

using ImageTensor = Tensor<float>;

}  // namespace dass
