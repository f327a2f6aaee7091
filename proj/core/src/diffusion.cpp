#include "dass/diffusion.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dass/errors.hpp"
#include "dass/imageio.hpp"
#include "dass/synthdata.hpp"

namespace dass {

ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps, const NoiseSchedule& s) {
  if (!s.valid_t(t)) throw ContractError("q_sample: t out of range");
  if (!x0.same_shape(eps)) throw ContractError("q_sample: eps shape mismatch");
  const float sa = static_cast<float>(std::sqrt(s.abar(t)));
  const float sb = static_cast<float>(std::sqrt(1.0 - s.abar(t)));
  ImageTensor out = x0;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] = sa * x0.v[i] + sb * eps.v[i];
  return out;
}

ImageTensor q_step(const ImageTensor& x_prev, int t, const ImageTensor& eps,
                   const NoiseSchedule& s) {
  if (!s.valid_t(t)) throw ContractError("q_step: t out of range");
  if (!x_prev.same_shape(eps)) throw ContractError("q_step: eps shape mismatch");
  const float sa = static_cast<float>(std::sqrt(1.0 - s.b(t)));
  const float sb = static_cast<float>(std::sqrt(s.b(t)));
  ImageTensor out = x_prev;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] = sa * x_prev.v[i] + sb * eps.v[i];
  return out;
}

ImageTensor posterior_mean(const ImageTensor& x_t, int t, const ImageTensor& eps_pred,
                           const NoiseSchedule& s) {
  if (!s.valid_t(t)) throw ContractError("posterior_mean: t out of range");
  if (!x_t.same_shape(eps_pred)) throw ContractError("posterior_mean: shape mismatch");
  const float inv = static_cast<float>(1.0 / std::sqrt(1.0 - s.b(t)));
  const float coef = static_cast<float>(s.b(t) / std::sqrt(1.0 - s.abar(t)));
  ImageTensor mu = x_t;
  for (size_t i = 0; i < mu.size(); ++i) mu.v[i] = inv * (x_t.v[i] - coef * eps_pred.v[i]);
  return mu;
}

ImageTensor reverse_step(const ImageTensor& x_t, int t, const ImageTensor& mu,
                         const NoiseSchedule& s, RngStream& rng) {
  if (!s.valid_t(t)) throw ContractError("reverse_step: t out of range");
  if (!x_t.same_shape(mu)) throw ContractError("reverse_step: shape mismatch");
  ImageTensor out = mu;
  if (t > 1) {
    const float sigma = static_cast<float>(std::sqrt(s.s2(t)));
    for (size_t i = 0; i < out.size(); ++i)
      out.v[i] += sigma * static_cast<float>(rng.normal());
  }
  return out;
}

double ddpm_loss(const ModelHandle& h, const ImageTensor& x0, const std::vector<int>& t,
                 const ImageTensor& eps, const NoiseSchedule& s, ImageTensor* grad_pred,
                 ImageTensor* pred_out) {
  if (static_cast<int>(t.size()) != x0.n) throw ContractError("ddpm_loss: t batch mismatch");
  // build x_t batch item-wise (each item has its own t)
  ImageTensor xt = x0;
  const size_t stride = static_cast<size_t>(x0.c) * x0.h * x0.w;
  for (int ni = 0; ni < x0.n; ++ni) {
    if (!s.valid_t(t[ni])) throw ContractError("ddpm_loss: t out of range");
    const float sa = static_cast<float>(std::sqrt(s.abar(t[ni])));
    const float sb = static_cast<float>(std::sqrt(1.0 - s.abar(t[ni])));
    for (size_t i = ni * stride; i < (ni + 1) * stride; ++i)
      xt.v[i] = sa * x0.v[i] + sb * eps.v[i];
  }
  ImageTensor pred = h.apply(xt, t);
  double loss = 0;
  const double inv = 1.0 / static_cast<double>(pred.size());
  if (grad_pred) *grad_pred = ImageTensor::zeros_like(pred);
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = static_cast<double>(pred.v[i]) - static_cast<double>(eps.v[i]);
    loss += d * d;
    if (grad_pred) grad_pred->v[i] = static_cast<float>(2.0 * d * inv);
  }
  if (pred_out) *pred_out = std::move(pred);
  return loss * inv;
}

ModelHandle train_diffusion_images(const std::vector<ImageTensor>& images, const NoiseSchedule& s,
                                   const UNetConfig& arch, const DiffusionTrainConfig& cfg,
                                   TrainStats* stats) {
  if (images.empty()) throw DataError("train_diffusion: empty image set");
  const int H = images[0].h, W = images[0].w;
  for (auto& im : images)
    if (im.h != H || im.w != W) throw DataError("train_diffusion: mismatched image sizes");

  ModelHandle h = ModelHandle::make_noise_estimator(arch, cfg.seed);
  h.schedule_fp = s.fingerprint();
  auto params = h.params();
  nn::Adam<float> opt;
  opt.lr = cfg.lr;
  opt.beta1 = cfg.adam_beta1;
  opt.beta2 = cfg.adam_beta2;

  RngStream rng = RngStream(cfg.seed).split(0x7261696eull);
  std::ofstream log;
  if (!cfg.log_path.empty()) log.open(cfg.log_path);
  auto t_start = std::chrono::steady_clock::now();

  double window_sum = 0;
  int window_n = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    ImageTensor batch(cfg.batch_size, 3, H, W);
    std::vector<int> tvec(cfg.batch_size);
    const size_t stride = static_cast<size_t>(3) * H * W;
    for (int bi = 0; bi < cfg.batch_size; ++bi) {
      const ImageTensor& src = images[rng.uniform_int(0, static_cast<int64_t>(images.size()) - 1)];
      std::copy(src.v.begin(), src.v.end(), batch.v.begin() + bi * stride);
      tvec[bi] = static_cast<int>(rng.uniform_int(1, s.T));
    }
    ImageTensor eps = rng.normal_like(batch);

    ImageTensor grad;
    double loss = ddpm_loss(h, batch, tvec, eps, s, &grad);
    h.unet->backward(grad);
    opt.step(params);
    nn::zero_grads(params);

    window_sum += loss;
    ++window_n;
    if ((it + 1) % cfg.log_every == 0 || it + 1 == cfg.iterations) {
      double mean = window_sum / window_n;
      if (stats) {
        if (it + 1 <= cfg.log_every) stats->initial_loss = mean;
        stats->final_loss = mean;
      }
      if (log) {
        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        log << nlohmann::json({{"iteration", it + 1}, {"loss", mean}, {"wall_time", wall}}).dump()
            << "\n";
      }
      window_sum = 0;
      window_n = 0;
    }
  }
  return h;
}

ModelHandle train_diffusion(const DatasetManifest& manifest, const std::string& manifest_dir,
                            const NoiseSchedule& s, const UNetConfig& arch,
                            const DiffusionTrainConfig& cfg, TrainStats* stats) {
  std::vector<ImageTensor> images;
  images.reserve(manifest.entries.size());
  for (auto& e : manifest.entries)
    images.push_back(read_image_png(manifest_dir + "/" + e.image_path));
  return train_diffusion_images(images, s, arch, cfg, stats);
}

}  // namespace dass
