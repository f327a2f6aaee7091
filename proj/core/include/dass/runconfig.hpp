#pragma once

#include <string>

#include "dass/diffusion.hpp"
#include "dass/ptl.hpp"

namespace dass {

// Aggregated, fully-serializable run configuration. Parsing is strict:
// unknown keys are rejected, and the resolved config (defaults filled
// in) is echoed beside every artifact a command produces.
struct RunConfig {
  DatasetConfig dataset;
  int T = 200;
  double beta1 = 1e-4;
  double betaT = 0.02;
  UNetConfig unet;
  SegNetConfig seg_arch;
  DiffusionTrainConfig diffusion_train;
  PTLConfig ptl;
  GuidanceConfig guidance;
  std::string output_root = "runs";
  uint64_t seed = 0;

  NoiseSchedule schedule() const { return make_linear_schedule(T, beta1, betaT); }

  static RunConfig from_json_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  void save(const std::string& path) const;
};

}  // namespace dass
