#include "dass/sgg.hpp"

#include <algorithm>
#include <cmath>

#include "dass/errors.hpp"

namespace dass {

std::vector<ClassMask> class_masks(const LabelMap& y, int num_classes) {
  std::vector<size_t> counts(num_classes, 0);
  for (auto v : y.v) {
    if (v >= num_classes) throw DataError("class_masks: label value >= num_classes");
    ++counts[v];
  }
  std::vector<ClassMask> out;
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    ClassMask m;
    m.cls = c;
    m.h = y.h;
    m.w = y.w;
    m.m.assign(y.size(), 0);
    for (size_t i = 0; i < y.size(); ++i) m.m[i] = y.v[i] == c ? 1 : 0;
    out.push_back(std::move(m));
  }
  return out;
}

double lcg_loss(const ModelHandle& g, const ImageTensor& x, const LabelMap& y, const ClassMask& m) {
  if (g.kind != ModelKind::Segmenter) throw ContractError("lcg_loss: not a segmenter");
  return guidance_loss_grad(*g.seg, x, y, &m, false).first;
}

double gsg_loss(const ModelHandle& g, const ImageTensor& x, const LabelMap& y) {
  if (g.kind != ModelKind::Segmenter) throw ContractError("gsg_loss: not a segmenter");
  return guidance_loss_grad(*g.seg, x, y, nullptr, false).first;
}

ImageTensor adjust_mean(const ImageTensor& mu, const ImageTensor& grad, const GuidanceConfig& cfg,
                        int t, const NoiseSchedule& s) {
  if (!mu.same_shape(grad)) throw ContractError("adjust_mean: shape mismatch");
  const float scale = static_cast<float>(
      (cfg.sign_mode == SignMode::LossDescent ? -1.0 : 1.0) * cfg.lambda * s.s2(t));
  ImageTensor out = mu;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] += scale * grad.v[i];
  return out;
}

namespace {

// Per-class input gradients from one batched segmenter pass. Branch i's
// loss is the class-masked CE of g(x * m_i), each normalized by its own
// pixel count; items are independent so one backward yields all grads.
std::vector<ImageTensor> lcg_gradients(const ModelHandle& g, const ImageTensor& x,
                                       const LabelMap& y, const std::vector<ClassMask>& masks) {
  const int P = static_cast<int>(masks.size());
  ImageTensor batch(P, x.c, x.h, x.w);
  const size_t stride = static_cast<size_t>(x.c) * x.h * x.w;
  for (int i = 0; i < P; ++i)
    for (int ci = 0; ci < x.c; ++ci)
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx)
          batch.at(i, ci, yy, xx) =
              masks[i].m[static_cast<size_t>(yy) * x.w + xx] ? x.at(0, ci, yy, xx) : 0.0f;

  ImageTensor logits = g.seg->forward(batch);
  std::vector<LabelMap> labels(P, y);
  std::vector<const std::vector<uint8_t>*> wptr(P);
  for (int i = 0; i < P; ++i) wptr[i] = &masks[i].m;
  // softmax_ce_loss normalizes over the union of counted pixels; redo the
  // normalization per item so each branch carries its own mean loss grad.
  auto [loss, glogits] = softmax_ce_loss(logits, labels, &wptr);
  (void)loss;
  size_t total = 0;
  for (int i = 0; i < P; ++i) total += masks[i].count();
  const size_t lstride = static_cast<size_t>(logits.c) * logits.h * logits.w;
  for (int i = 0; i < P; ++i) {
    const float f = static_cast<float>(static_cast<double>(total) / masks[i].count());
    for (size_t j = i * lstride; j < (i + 1) * lstride; ++j) glogits.v[j] *= f;
  }
  ImageTensor gin = g.seg->backward(glogits);
  auto ps = g.params();
  nn::zero_grads(ps);

  std::vector<ImageTensor> grads;
  for (int i = 0; i < P; ++i) {
    ImageTensor gi(1, x.c, x.h, x.w);
    for (int ci = 0; ci < x.c; ++ci)
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx)
          gi.at(0, ci, yy, xx) = masks[i].m[static_cast<size_t>(yy) * x.w + xx]
                                     ? gin.at(i, ci, yy, xx)
                                     : 0.0f;
    grads.push_back(std::move(gi));
  }
  (void)stride;
  return grads;
}

ImageTensor draw_step_noise(const ImageTensor& ref, int k, const NoiseSchedule& s,
                            RngStream& step_rng) {
  ImageTensor z = ImageTensor::zeros_like(ref);
  if (k > 1) {
    (void)s;
    for (auto& v : z.v) v = static_cast<float>(step_rng.normal());
  }
  return z;
}

}  // namespace

ImageTensor lcg_step(const ImageTensor& x_k, int k, const ModelHandle& dm, const ModelHandle& g,
                     const LabelMap& y, const GuidanceConfig& cfg, const NoiseSchedule& s,
                     RngStream& step_rng) {
  if (!s.valid_t(k)) throw ContractError("lcg_step: k out of range");
  ImageTensor eps_pred = dm.apply(x_k, {k});
  ImageTensor mu = posterior_mean(x_k, k, eps_pred, s);
  auto masks = class_masks(y, g.num_classes());

  std::vector<ImageTensor> grads;
  if (cfg.lambda != 0.0) grads = lcg_gradients(g, x_k, y, masks);

  const float sigma = k > 1 ? static_cast<float>(std::sqrt(s.s2(k))) : 0.0f;
  ImageTensor shared_z = draw_step_noise(mu, k, s, step_rng);

  ImageTensor out = ImageTensor::zeros_like(mu);
  for (size_t mi = 0; mi < masks.size(); ++mi) {
    ImageTensor mu_hat =
        cfg.lambda != 0.0 ? adjust_mean(mu, grads[mi], cfg, k, s) : mu;
    const ImageTensor* z = &shared_z;
    ImageTensor own_z;
    if (!cfg.shared_class_noise && mi > 0) {
      own_z = draw_step_noise(mu, k, s, step_rng);
      z = &own_z;
    }
    for (int ci = 0; ci < out.c; ++ci)
      for (int yy = 0; yy < out.h; ++yy)
        for (int xx = 0; xx < out.w; ++xx)
          if (masks[mi].m[static_cast<size_t>(yy) * out.w + xx])
            out.at(0, ci, yy, xx) = mu_hat.at(0, ci, yy, xx) + sigma * z->at(0, ci, yy, xx);
  }
  return out;
}

ImageTensor gsg_step(const ImageTensor& x_k, int k, const ModelHandle& dm, const ModelHandle& g,
                     const LabelMap& y, const GuidanceConfig& cfg, const NoiseSchedule& s,
                     RngStream& step_rng) {
  if (!s.valid_t(k)) throw ContractError("gsg_step: k out of range");
  ImageTensor eps_pred = dm.apply(x_k, {k});
  ImageTensor mu = posterior_mean(x_k, k, eps_pred, s);
  ImageTensor mu_hat = mu;
  if (cfg.lambda != 0.0) {
    auto [loss, grad] = guidance_loss_grad(*g.seg, x_k, y, nullptr);
    (void)loss;
    mu_hat = adjust_mean(mu, grad, cfg, k, s);
  }
  return reverse_step(x_k, k, mu_hat, s, step_rng);
}

std::vector<StepKind> arrangement_schedule(int n, const GuidanceConfig& cfg) {
  std::vector<StepKind> out(n);
  const int n_lcg = (n + 1) / 2;  // LCG starts at k = n, so odd n favors LCG
  switch (cfg.arrangement) {
    case Arrangement::Alternate:
      for (int i = 0; i < n; ++i) out[i] = i % 2 == 0 ? StepKind::Lcg : StepKind::Gsg;
      break;
    case Arrangement::LcgFirst:
      for (int i = 0; i < n; ++i) out[i] = i < n_lcg ? StepKind::Lcg : StepKind::Gsg;
      break;
    case Arrangement::GsgFirst:
      for (int i = 0; i < n; ++i) out[i] = i < n - n_lcg ? StepKind::Gsg : StepKind::Lcg;
      break;
    case Arrangement::RandomMix: {
      for (int i = 0; i < n; ++i) out[i] = i < n_lcg ? StepKind::Lcg : StepKind::Gsg;
      RngStream r(cfg.random_mix_seed ^ 0x6d697875ull);
      for (int i = n - 1; i > 0; --i)
        std::swap(out[i], out[r.uniform_int(0, i)]);
      break;
    }
  }
  return out;
}

ImageTensor guided_translate(const ImageTensor& x0, int n, const ModelHandle& dm,
                             const ModelHandle& g, const LabelMap& y, const GuidanceConfig& cfg,
                             const NoiseSchedule& s, RngStream rng) {
  if (n == 0) return x0;
  if (n < 0 || n > s.T) throw ContractError("guided_translate: n out of range");
  auto kinds = arrangement_schedule(n, cfg);

  RngStream eps_rng = rng.split(0);
  ImageTensor x = q_sample(x0, n, eps_rng.normal_like(x0), s);
  for (int k = n; k >= 1; --k) {
    RngStream step_rng = rng.split(static_cast<uint64_t>(k));
    if (kinds[n - k] == StepKind::Lcg)
      x = lcg_step(x, k, dm, g, y, cfg, s, step_rng);
    else
      x = gsg_step(x, k, dm, g, y, cfg, s, step_rng);
  }
  x.clip(-1.0f, 1.0f);
  return x;
}

}  // namespace dass
