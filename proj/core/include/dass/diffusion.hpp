#pragma once

#include <string>
#include <vector>

#include "dass/models.hpp"
#include "dass/rng.hpp"
#include "dass/schedule.hpp"
#include "dass/tensor.hpp"

namespace dass {

struct DatasetManifest;  // synthdata.hpp

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps  (closed-form diffusion)
ImageTensor q_sample(const ImageTensor& x0, int t, const ImageTensor& eps, const NoiseSchedule& s);

// Single diffusion step: x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps
ImageTensor q_step(const ImageTensor& x_prev, int t, const ImageTensor& eps, const NoiseSchedule& s);

// mu_theta(x_t, t) = (x_t - beta_t / sqrt(1 - abar_t) * eps_pred) / sqrt(1 - beta_t)
ImageTensor posterior_mean(const ImageTensor& x_t, int t, const ImageTensor& eps_pred,
                           const NoiseSchedule& s);

// x_{t-1} = mu + sqrt(sigma2_t) z, z ~ N(0, I); no noise at t == 1.
ImageTensor reverse_step(const ImageTensor& x_t, int t, const ImageTensor& mu,
                         const NoiseSchedule& s, RngStream& rng);

// Mean squared error between predicted and true noise (Eq. of L_DM),
// averaged over batch and elements. Fills grad_out for training when
// grad_out != nullptr.
double ddpm_loss(const ModelHandle& h, const ImageTensor& x0, const std::vector<int>& t,
                 const ImageTensor& eps, const NoiseSchedule& s, ImageTensor* grad_pred = nullptr,
                 ImageTensor* pred_out = nullptr);

struct DiffusionTrainConfig {
  int iterations = 5000;
  int batch_size = 4;
  double lr = 2e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  uint64_t seed = 1;
  int log_every = 100;
  std::string log_path;  // JSON-lines (iteration, loss, wall_time); empty = no log
};

struct TrainStats {
  double initial_loss = 0;  // mean loss over the first log window
  double final_loss = 0;    // mean loss over the last log window
};

// DDPM training on the unlabeled target split. Returns the trained
// handle; checkpoint persistence is the caller's business.
ModelHandle train_diffusion(const DatasetManifest& manifest, const std::string& manifest_dir,
                            const NoiseSchedule& s, const UNetConfig& arch,
                            const DiffusionTrainConfig& cfg, TrainStats* stats = nullptr);

// In-memory variant (used by tests and by train_diffusion internally).
ModelHandle train_diffusion_images(const std::vector<ImageTensor>& images, const NoiseSchedule& s,
                                   const UNetConfig& arch, const DiffusionTrainConfig& cfg,
                                   TrainStats* stats = nullptr);

}  // namespace dass
