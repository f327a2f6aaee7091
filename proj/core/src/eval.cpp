#include "dass/eval.hpp"

#include "dass/errors.hpp"

namespace dass {

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt) {
  if (pred.h != gt.h || pred.w != gt.w) throw ContractError("confusion: shape mismatch");
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt.v[i] >= C || pred.v[i] >= C) throw DataError("confusion: label value >= C");
    ++counts[static_cast<size_t>(gt.v[i]) * C + pred.v[i]];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.C != C) throw ContractError("confusion: merge C mismatch");
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

IouResult miou(const ConfusionMatrix& cm) {
  IouResult r;
  r.per_class.assign(cm.C, std::nan(""));
  double sum = 0;
  int present = 0;
  int64_t diag = 0;
  for (int c = 0; c < cm.C; ++c) {
    int64_t tp = cm.at(c, c);
    diag += tp;
    int64_t fp = 0, fn = 0;
    for (int o = 0; o < cm.C; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    if (tp + fp + fn == 0) continue;  // absent from both gt and pred
    r.per_class[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    sum += r.per_class[c];
    ++present;
  }
  if (present == 0) throw DataError("miou: every class absent");
  r.mean = sum / present;
  r.pixel_accuracy = cm.total() > 0 ? static_cast<double>(diag) / cm.total() : 0.0;
  return r;
}

LabelMap argmax_labels(const ImageTensor& logits) {
  LabelMap out(logits.h, logits.w);
  for (int y = 0; y < logits.h; ++y)
    for (int x = 0; x < logits.w; ++x) {
      int best = 0;
      float bv = logits.at(0, 0, y, x);
      for (int c = 1; c < logits.c; ++c)
        if (logits.at(0, c, y, x) > bv) {
          bv = logits.at(0, c, y, x);
          best = c;
        }
      out.at(y, x) = static_cast<uint8_t>(best);
    }
  return out;
}

double consistency_score(const ModelHandle& g, const std::vector<ImageTensor>& images,
                         const std::vector<LabelMap>& labels) {
  if (images.size() != labels.size()) throw ContractError("consistency_score: pairing broken");
  ConfusionMatrix cm(g.num_classes());
  for (size_t i = 0; i < images.size(); ++i)
    cm.accumulate(argmax_labels(g.apply(images[i])), labels[i]);
  return miou(cm).mean;
}

void ColorHistogram::add(const ImageTensor& img) {
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) {
        float v = img.at(0, c, y, x);
        int b = static_cast<int>((v + 1.0f) * 0.5f * kBins);
        b = std::max(0, std::min(kBins - 1, b));
        bins[c][b] += 1.0;
      }
}

void ColorHistogram::normalize() {
  for (auto& ch : bins) {
    double s = 0;
    for (double v : ch) s += v;
    if (s > 0)
      for (double& v : ch) v /= s;
  }
}

double ColorHistogram::l1_distance(const ColorHistogram& a, const ColorHistogram& b) {
  double d = 0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < kBins; ++i) d += std::fabs(a.bins[c][i] - b.bins[c][i]);
  return d;
}

}  // namespace dass
