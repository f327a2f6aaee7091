#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "dass/rng.hpp"
#include "dass/tensor.hpp"

namespace dass::nn {

template <class T>
struct ParamRef {
  std::string name;
  AVec<T>* w;
  AVec<T>* g;
};

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// 2D convolution via im2col + GEMM. Weight layout: [out_c][in_c*k*k].
template <class T>
struct Conv2d {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  AVec<T> w, b, gw, gb;
  Tensor<T> cached_in;

  Conv2d() = default;
  Conv2d(int ic, int oc, int k_ = 3, int stride_ = 1, int pad_ = 1)
      : in_c(ic), out_c(oc), k(k_), stride(stride_), pad(pad_) {
    w.assign(static_cast<size_t>(oc) * ic * k * k, T(0));
    b.assign(oc, T(0));
    gw.assign(w.size(), T(0));
    gb.assign(b.size(), T(0));
  }

  void init_he(RngStream& rng) {
    double std = std::sqrt(2.0 / (in_c * k * k));
    for (auto& x : w) x = static_cast<T>(rng.normal() * std);
    for (auto& x : b) x = T(0);
  }
  void init_zero() {
    std::fill(w.begin(), w.end(), T(0));
    std::fill(b.begin(), b.end(), T(0));
  }

  int out_h(int h) const { return (h + 2 * pad - k) / stride + 1; }

  void im2col(const Tensor<T>& x, int ni, Mat<T>& col) const {
    const int oh = out_h(x.h), ow = out_h(x.w);
    col.setZero(in_c * k * k, oh * ow);
    for (int ci = 0; ci < in_c; ++ci)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int row = (ci * k + ky) * k + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= x.h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= x.w) continue;
              col(row, oy * ow + ox) = x.at(ni, ci, iy, ix);
            }
          }
        }
  }

  void col2im_add(const Mat<T>& col, Tensor<T>& x, int ni) const {
    const int oh = out_h(x.h), ow = out_h(x.w);
    for (int ci = 0; ci < in_c; ++ci)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int row = (ci * k + ky) * k + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= x.h) continue;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix < 0 || ix >= x.w) continue;
              x.at(ni, ci, iy, ix) += col(row, oy * ow + ox);
            }
          }
        }
  }

  Tensor<T> forward(const Tensor<T>& x) {
    cached_in = x;
    const int oh = out_h(x.h), ow = out_h(x.w);
    Tensor<T> out(x.n, out_c, oh, ow);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        W(w.data(), out_c, in_c * k * k);
    Mat<T> col;
    for (int ni = 0; ni < x.n; ++ni) {
      im2col(x, ni, col);
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          O(&out.at(ni, 0, 0, 0), out_c, oh * ow);
      O.noalias() = W * col;
      for (int ci = 0; ci < out_c; ++ci) O.row(ci).array() += b[ci];
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gout) {
    const Tensor<T>& x = cached_in;
    const int oh = out_h(x.h), ow = out_h(x.w);
    Tensor<T> gin = Tensor<T>::zeros_like(x);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        W(w.data(), out_c, in_c * k * k);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        GW(gw.data(), out_c, in_c * k * k);
    Mat<T> col, gcol;
    for (int ni = 0; ni < x.n; ++ni) {
      im2col(x, ni, col);
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          GO(&gout.at(ni, 0, 0, 0), out_c, oh * ow);
      GW.noalias() += GO * col.transpose();
      for (int ci = 0; ci < out_c; ++ci) gb[ci] += GO.row(ci).sum();
      gcol.noalias() = W.transpose() * GO;
      col2im_add(gcol, gin, ni);
    }
    return gin;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
  }
};

// Fully connected layer on (n, features, 1, 1) tensors.
template <class T>
struct Linear {
  int in_f = 0, out_f = 0;
  AVec<T> w, b, gw, gb;  // w: [out_f][in_f]
  Tensor<T> cached_in;

  Linear() = default;
  Linear(int i, int o) : in_f(i), out_f(o) {
    w.assign(static_cast<size_t>(o) * i, T(0));
    b.assign(o, T(0));
    gw.assign(w.size(), T(0));
    gb.assign(b.size(), T(0));
  }

  void init_he(RngStream& rng) {
    double std = std::sqrt(2.0 / in_f);
    for (auto& x : w) x = static_cast<T>(rng.normal() * std);
    for (auto& x : b) x = T(0);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    cached_in = x;
    Tensor<T> out(x.n, out_f, 1, 1);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        W(w.data(), out_f, in_f);
    for (int ni = 0; ni < x.n; ++ni) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xi(&x.at(ni, 0, 0, 0), in_f);
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> oi(&out.at(ni, 0, 0, 0), out_f);
      oi.noalias() = W * xi;
      for (int j = 0; j < out_f; ++j) oi(j) += b[j];
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gout) {
    const Tensor<T>& x = cached_in;
    Tensor<T> gin = Tensor<T>::zeros_like(x);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        W(w.data(), out_f, in_f);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        GW(gw.data(), out_f, in_f);
    for (int ni = 0; ni < x.n; ++ni) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xi(&x.at(ni, 0, 0, 0), in_f);
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> go(&gout.at(ni, 0, 0, 0), out_f);
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gi(&gin.at(ni, 0, 0, 0), in_f);
      GW.noalias() += go * xi.transpose();
      for (int j = 0; j < out_f; ++j) gb[j] += go(j);
      gi.noalias() = W.transpose() * go;
    }
    return gin;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".w", &w, &gw});
    out.push_back({prefix + ".b", &b, &gb});
  }
};

template <class T>
struct SiLU {
  Tensor<T> cached_in;
  Tensor<T> forward(const Tensor<T>& x) {
    cached_in = x;
    Tensor<T> out = x;
    for (auto& v : out.v) v = v / (T(1) + std::exp(-v));
    return out;
  }
  Tensor<T> backward(const Tensor<T>& gout) {
    Tensor<T> gin = gout;
    for (size_t i = 0; i < gin.v.size(); ++i) {
      T x = cached_in.v[i];
      T s = T(1) / (T(1) + std::exp(-x));
      gin.v[i] *= s * (T(1) + x * (T(1) - s));
    }
    return gin;
  }
};

template <class T>
struct ReLU {
  Tensor<T> cached_in;
  Tensor<T> forward(const Tensor<T>& x) {
    cached_in = x;
    Tensor<T> out = x;
    for (auto& v : out.v) v = v > T(0) ? v : T(0);
    return out;
  }
  Tensor<T> backward(const Tensor<T>& gout) {
    Tensor<T> gin = gout;
    for (size_t i = 0; i < gin.v.size(); ++i)
      if (cached_in.v[i] <= T(0)) gin.v[i] = T(0);
    return gin;
  }
};

template <class T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  Tensor<T> out(x.n, x.c, x.h * 2, x.w * 2);
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci)
      for (int y = 0; y < out.h; ++y)
        for (int xx = 0; xx < out.w; ++xx)
          out.at(ni, ci, y, xx) = x.at(ni, ci, y / 2, xx / 2);
  return out;
}

template <class T>
Tensor<T> upsample2x_backward(const Tensor<T>& gout) {
  Tensor<T> gin(gout.n, gout.c, gout.h / 2, gout.w / 2);
  for (int ni = 0; ni < gout.n; ++ni)
    for (int ci = 0; ci < gout.c; ++ci)
      for (int y = 0; y < gout.h; ++y)
        for (int xx = 0; xx < gout.w; ++xx)
          gin.at(ni, ci, y / 2, xx / 2) += gout.at(ni, ci, y, xx);
  return gin;
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int ni = 0; ni < a.n; ++ni) {
    for (int ci = 0; ci < a.c; ++ci)
      for (int y = 0; y < a.h; ++y)
        for (int xx = 0; xx < a.w; ++xx) out.at(ni, ci, y, xx) = a.at(ni, ci, y, xx);
    for (int ci = 0; ci < b.c; ++ci)
      for (int y = 0; y < a.h; ++y)
        for (int xx = 0; xx < a.w; ++xx)
          out.at(ni, a.c + ci, y, xx) = b.at(ni, ci, y, xx);
  }
  return out;
}

template <class T>
void split_channels(const Tensor<T>& g, int ca, Tensor<T>& ga, Tensor<T>& gb) {
  ga = Tensor<T>(g.n, ca, g.h, g.w);
  gb = Tensor<T>(g.n, g.c - ca, g.h, g.w);
  for (int ni = 0; ni < g.n; ++ni) {
    for (int ci = 0; ci < ca; ++ci)
      for (int y = 0; y < g.h; ++y)
        for (int xx = 0; xx < g.w; ++xx) ga.at(ni, ci, y, xx) = g.at(ni, ci, y, xx);
    for (int ci = ca; ci < g.c; ++ci)
      for (int y = 0; y < g.h; ++y)
        for (int xx = 0; xx < g.w; ++xx) gb.at(ni, ci - ca, y, xx) = g.at(ni, ci, y, xx);
  }
}

// Broadcast-add a (n, c, 1, 1) embedding over spatial dims.
template <class T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& emb) {
  Tensor<T> out = x;
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci) {
      T e = emb.at(ni, ci, 0, 0);
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) out.at(ni, ci, y, xx) += e;
    }
  return out;
}

template <class T>
Tensor<T> channel_bias_backward(const Tensor<T>& gout) {
  Tensor<T> gemb(gout.n, gout.c, 1, 1);
  for (int ni = 0; ni < gout.n; ++ni)
    for (int ci = 0; ci < gout.c; ++ci) {
      T s = T(0);
      for (int y = 0; y < gout.h; ++y)
        for (int xx = 0; xx < gout.w; ++xx) s += gout.at(ni, ci, y, xx);
      gemb.at(ni, ci, 0, 0) = s;
    }
  return gemb;
}

// ---- Optimizers ----

template <class T>
struct Adam {
  double lr = 2e-5, beta1 = 0.9, beta2 = 0.99, eps = 1e-8;
  int64_t step_count = 0;
  std::vector<std::vector<T>> m, v;

  void step(std::vector<ParamRef<T>>& params) {
    if (m.empty()) {
      for (auto& p : params) {
        m.emplace_back(p.w->size(), T(0));
        v.emplace_back(p.w->size(), T(0));
      }
    }
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& w = *params[pi].w;
      auto& g = *params[pi].g;
      for (size_t i = 0; i < w.size(); ++i) {
        m[pi][i] = static_cast<T>(beta1 * m[pi][i] + (1 - beta1) * g[i]);
        v[pi][i] = static_cast<T>(beta2 * v[pi][i] + (1 - beta2) * g[i] * g[i]);
        double mh = m[pi][i] / bc1, vh = v[pi][i] / bc2;
        w[i] -= static_cast<T>(lr * mh / (std::sqrt(vh) + eps));
      }
    }
  }
};

template <class T>
struct SgdMomentum {
  double lr = 2.5e-4, momentum = 0.9;
  std::vector<std::vector<T>> vel;

  void step(std::vector<ParamRef<T>>& params) {
    if (vel.empty())
      for (auto& p : params) vel.emplace_back(p.w->size(), T(0));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      auto& w = *params[pi].w;
      auto& g = *params[pi].g;
      for (size_t i = 0; i < w.size(); ++i) {
        vel[pi][i] = static_cast<T>(momentum * vel[pi][i] - lr * g[i]);
        w[i] += vel[pi][i];
      }
    }
  }
};

template <class T>
void zero_grads(std::vector<ParamRef<T>>& params) {
  for (auto& p : params) std::fill(p.g->begin(), p.g->end(), T(0));
}

}  // namespace dass::nn
