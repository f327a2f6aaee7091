#pragma once

#include <string>

#include "dass/diffusion.hpp"
#include "dass/synthdata.hpp"

namespace dass {

struct TranslationRequest {
  int n = 0;  // diffuse/denoise depth; 0 allowed for testing (identity)
  const ImageTensor* x0 = nullptr;
  const ModelHandle* model = nullptr;
  const NoiseSchedule* schedule = nullptr;
  RngStream rng;
};

// Diffuse n steps via the closed form, then denoise n steps with the
// target-trained model; output clipped to [-1, 1].
// RNG discipline: q_sample noise from rng.split(0), reverse-step noise
// at step k from rng.split(k). Guided translation reuses the same
// lineage so the lambda = 0 case is bit-identical.
ImageTensor translate_unguided(const TranslationRequest& req);

struct StageOutput {
  std::string dir;                  // stage_<n>/
  std::vector<std::string> images;  // relative image paths
  std::vector<int> source_indices;  // index into the source manifest
};

// Translates (a subsample of) the source split to stage_<n>/ under
// out_root and writes stage_<n>/manifest.json. Labels are carried over
// by reference to the source manifest, never rewritten.
StageOutput translate_dataset(const DatasetManifest& source, const std::string& source_dir,
                              int n, const ModelHandle& model, const NoiseSchedule& s,
                              RngStream rng, double subsample_fraction,
                              const std::string& out_root);

}  // namespace dass
