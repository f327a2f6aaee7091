#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dass/sgg.hpp"

namespace dass {

// Rows = ground truth, cols = prediction.
struct ConfusionMatrix {
  int C = 0;
  std::vector<int64_t> counts;

  explicit ConfusionMatrix(int C_ = 0) : C(C_), counts(static_cast<size_t>(C_) * C_, 0) {}
  int64_t& at(int gt, int pred) { return counts[static_cast<size_t>(gt) * C + pred]; }
  int64_t at(int gt, int pred) const { return counts[static_cast<size_t>(gt) * C + pred]; }

  void accumulate(const LabelMap& pred, const LabelMap& gt);
  void merge(const ConfusionMatrix& other);
  int64_t total() const;
};

struct IouResult {
  std::vector<double> per_class;  // NaN for classes absent from both gt and pred
  double mean = 0;
  double pixel_accuracy = 0;
};

// IoU_c = TP / (TP + FP + FN); classes absent from both gt and pred are
// excluded from the mean. Throws if every class is absent.
IouResult miou(const ConfusionMatrix& cm);

LabelMap argmax_labels(const ImageTensor& logits);  // logits: 1xCxHxW

// mIoU between argmax(g(x)) and the paired source labels: measures how
// well translation preserved the source semantics.
double consistency_score(const ModelHandle& g, const std::vector<ImageTensor>& images,
                         const std::vector<LabelMap>& labels);

// Central finite differences over every input element against the
// analytic input gradient. Relative error denominator max(|a|,|b|,1e-8).
template <class T>
double grad_check(SegNet<T>& net, const Tensor<T>& x, const LabelMap& y, const ClassMask* mask,
                  double delta) {
  auto [loss0, grad] = guidance_loss_grad(net, x, y, mask);
  (void)loss0;
  double max_rel = 0;
  Tensor<T> xp = x;
  for (size_t i = 0; i < x.size(); ++i) {
    xp.v[i] = x.v[i] + static_cast<T>(delta);
    double lp = guidance_loss_grad(net, xp, y, mask, false).first;
    xp.v[i] = x.v[i] - static_cast<T>(delta);
    double lm = guidance_loss_grad(net, xp, y, mask, false).first;
    xp.v[i] = x.v[i];
    double fd = (lp - lm) / (2.0 * delta);
    double an = static_cast<double>(grad.v[i]);
    double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
    max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
  }
  return max_rel;
}

// Per-channel color histogram over [-1, 1], normalized to sum 1 per channel.
struct ColorHistogram {
  static constexpr int kBins = 32;
  std::array<std::array<double, kBins>, 3> bins{};

  void add(const ImageTensor& img);
  void normalize();
  static double l1_distance(const ColorHistogram& a, const ColorHistogram& b);
};

}  // namespace dass
