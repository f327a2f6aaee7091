#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "dass/errors.hpp"
#include "dass/tensor.hpp"

namespace dass {

// Mean squared error over all elements; returns loss and dL/dpred.
template <class T>
std::pair<double, Tensor<T>> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!pred.same_shape(target)) throw ContractError("mse_loss: shape mismatch");
  double loss = 0;
  Tensor<T> grad = Tensor<T>::zeros_like(pred);
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = static_cast<double>(pred.v[i]) - static_cast<double>(target.v[i]);
    loss += d * d;
    grad.v[i] = static_cast<T>(2.0 * d * inv);
  }
  return {loss * inv, grad};
}

// Pixel-wise softmax cross-entropy against integer labels, averaged over
// pixels where weight > 0 (weight == nullptr counts every pixel).
// weight is one map per batch item, values {0,1}.
template <class T>
std::pair<double, Tensor<T>> softmax_ce_loss(const Tensor<T>& logits,
                                             const std::vector<LabelMap>& labels,
                                             const std::vector<const std::vector<uint8_t>*>* weight = nullptr) {
  if (static_cast<int>(labels.size()) != logits.n)
    throw ContractError("softmax_ce_loss: label batch mismatch");
  const int C = logits.c, H = logits.h, W = logits.w;
  Tensor<T> grad = Tensor<T>::zeros_like(logits);
  double loss = 0;
  size_t counted = 0;
  std::vector<double> p(C);
  for (int ni = 0; ni < logits.n; ++ni) {
    const LabelMap& y = labels[ni];
    if (y.h != H || y.w != W) throw ContractError("softmax_ce_loss: label shape mismatch");
    for (int yy = 0; yy < H; ++yy)
      for (int xx = 0; xx < W; ++xx) {
        if (weight && (*(*weight)[ni])[static_cast<size_t>(yy) * W + xx] == 0) continue;
        int cls = y.at(yy, xx);
        if (cls >= C) throw DataError("softmax_ce_loss: label value >= num_classes");
        double mx = -1e300;
        for (int ci = 0; ci < C; ++ci) mx = std::max(mx, static_cast<double>(logits.at(ni, ci, yy, xx)));
        double z = 0;
        for (int ci = 0; ci < C; ++ci) {
          p[ci] = std::exp(static_cast<double>(logits.at(ni, ci, yy, xx)) - mx);
          z += p[ci];
        }
        for (int ci = 0; ci < C; ++ci) p[ci] /= z;
        loss += -std::log(std::max(p[cls], 1e-300));
        ++counted;
        for (int ci = 0; ci < C; ++ci)
          grad.at(ni, ci, yy, xx) = static_cast<T>(p[ci] - (ci == cls ? 1.0 : 0.0));
      }
  }
  if (counted == 0) throw ContractError("softmax_ce_loss: empty pixel set");
  const double inv = 1.0 / static_cast<double>(counted);
  for (auto& g : grad.v) g = static_cast<T>(g * inv);
  return {loss * inv, grad};
}

}  // namespace dass
