#pragma once

#include <utility>
#include <vector>

#include "dass/diffusion.hpp"
#include "dass/losses.hpp"
#include "dass/models.hpp"

namespace dass {

enum class SignMode { LossDescent, PaperLiteral };
enum class Arrangement { Alternate, LcgFirst, GsgFirst, RandomMix };

struct GuidanceConfig {
  double lambda = 80.0;
  SignMode sign_mode = SignMode::LossDescent;
  Arrangement arrangement = Arrangement::Alternate;
  uint64_t random_mix_seed = 0;
  bool shared_class_noise = true;  // share one z across per-class branches
};

struct ClassMask {
  int cls = 0;
  int h = 0, w = 0;
  std::vector<uint8_t> m;  // {0,1}

  size_t count() const {
    size_t n = 0;
    for (auto v : m) n += v;
    return n;
  }
};

// One mask per class present in y; masks partition the image.
std::vector<ClassMask> class_masks(const LabelMap& y, int num_classes);

// Masked guidance loss and its input gradient, templated so the
// finite-difference oracle can run the same code in double precision.
// mask == nullptr gives the global (whole image) loss.
template <class T>
std::pair<double, Tensor<T>> guidance_loss_grad(SegNet<T>& net, const Tensor<T>& x,
                                                const LabelMap& y, const ClassMask* mask,
                                                bool want_grad = true) {
  Tensor<T> input = x;
  if (mask) {
    if (mask->count() == 0) throw ContractError("guidance loss: empty mask");
    for (int ci = 0; ci < x.c; ++ci)
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx)
          if (!mask->m[static_cast<size_t>(yy) * x.w + xx]) input.at(0, ci, yy, xx) = T(0);
  }
  Tensor<T> logits = net.forward(input);
  std::vector<LabelMap> labels{y};
  std::vector<const std::vector<uint8_t>*> wptr{mask ? &mask->m : nullptr};
  std::vector<const std::vector<uint8_t>*>* weights = mask ? &wptr : nullptr;
  auto [loss, glogits] = softmax_ce_loss(logits, labels, weights);
  if (!want_grad) return {loss, Tensor<T>()};
  Tensor<T> gin = net.backward(glogits);
  if (mask) {
    for (int ci = 0; ci < x.c; ++ci)
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx)
          if (!mask->m[static_cast<size_t>(yy) * x.w + xx]) gin.at(0, ci, yy, xx) = T(0);
  }
  std::vector<nn::ParamRef<T>> ps;
  net.params(ps);
  nn::zero_grads(ps);
  return {loss, std::move(gin)};
}

// Cross-entropy of g(x * m_c) against y over the pixels of class c.
double lcg_loss(const ModelHandle& g, const ImageTensor& x, const LabelMap& y, const ClassMask& m);
// Cross-entropy of g(x) against y over all pixels.
double gsg_loss(const ModelHandle& g, const ImageTensor& x, const LabelMap& y);

// mu_hat = mu -/+ lambda * sigma2_t * grad (LossDescent / PaperLiteral).
ImageTensor adjust_mean(const ImageTensor& mu, const ImageTensor& grad, const GuidanceConfig& cfg,
                        int t, const NoiseSchedule& s);

// One LCG-guided reverse step: per-class adjusted branches recombined by
// the class partition. step_rng must be the stream the unguided
// reverse_step would consume at this k.
ImageTensor lcg_step(const ImageTensor& x_k, int k, const ModelHandle& dm, const ModelHandle& g,
                     const LabelMap& y, const GuidanceConfig& cfg, const NoiseSchedule& s,
                     RngStream& step_rng);

// One GSG-guided reverse step: single whole-image gradient.
ImageTensor gsg_step(const ImageTensor& x_k, int k, const ModelHandle& dm, const ModelHandle& g,
                     const LabelMap& y, const GuidanceConfig& cfg, const NoiseSchedule& s,
                     RngStream& step_rng);

enum class StepKind { Lcg, Gsg };

// Step kinds for k = n down to 1 (index 0 is k = n).
std::vector<StepKind> arrangement_schedule(int n, const GuidanceConfig& cfg);

// SGG-guided translation: q_sample to x_n, guided reverse loop, clip.
// Shares the RNG lineage of translate_unguided.
ImageTensor guided_translate(const ImageTensor& x0, int n, const ModelHandle& dm,
                             const ModelHandle& g, const LabelMap& y, const GuidanceConfig& cfg,
                             const NoiseSchedule& s, RngStream rng);

}  // namespace dass
