#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dass/nets.hpp"

namespace dass {

enum class ModelKind { NoiseEstimator, Segmenter };

// Owning handle over one of the two reference nets. apply() is
// deterministic given frozen parameters; gradients are available both
// w.r.t. parameters (training) and w.r.t. the input image (guidance).
struct ModelHandle {
  ModelKind kind = ModelKind::NoiseEstimator;
  UNetConfig ucfg;
  SegNetConfig scfg;
  std::shared_ptr<UNet<float>> unet;
  std::shared_ptr<SegNet<float>> seg;
  uint64_t schedule_fp = 0;  // for noise estimators
  int stage = -1;            // for segmenters (PTL stage index)

  static ModelHandle make_noise_estimator(const UNetConfig& cfg, uint64_t seed);
  static ModelHandle make_segmenter(const SegNetConfig& cfg, uint64_t seed);

  // Handles share the net; clone() before in-place training to leave
  // the caller's copy untouched.
  ModelHandle clone() const;

  // Predicted noise for x_t at timesteps t (one per batch item).
  ImageTensor apply(const ImageTensor& x_t, const std::vector<int>& t) const;
  // Per-pixel class logits.
  ImageTensor apply(const ImageTensor& x) const;

  std::vector<nn::ParamRef<float>> params() const;
  size_t param_count() const;
  int num_classes() const { return scfg.num_classes; }
};

// loss_fn maps the model output to (scalar loss, dL/doutput).
using LossFn = std::function<std::pair<double, ImageTensor>(const ImageTensor&)>;

// dL/dx for a segmenter; parameters are left untouched.
ImageTensor input_gradient(const ModelHandle& h, const ImageTensor& x, const LossFn& loss_fn);
// Same for a noise estimator (needs timesteps).
ImageTensor input_gradient(const ModelHandle& h, const ImageTensor& x, const std::vector<int>& t,
                           const LossFn& loss_fn);

// ---- Checkpoints ----
// Binary container: magic "DSCK", u32 version, u8 kind, u32 metadata
// length, metadata JSON, then named float32 arrays (u16 name length,
// name bytes, u64 element count, raw little-endian data).
void save_checkpoint(const ModelHandle& h, const std::string& path);
ModelHandle load_checkpoint(const std::string& path);

}  // namespace dass
