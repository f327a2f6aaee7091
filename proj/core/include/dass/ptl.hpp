#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dass/eval.hpp"
#include "dass/sgg.hpp"
#include "dass/translate.hpp"

namespace dass {

struct SegTrainConfig {
  int batch_size = 2;
  double lr = 2.5e-4;
  double momentum = 0.9;
  double aug_fraction = 0.10;
};

enum class GuidanceMode { Sgg, LcgOnly, GsgOnly, None };

struct PTLConfig {
  int N = 16;
  int finetune_iters_per_stage = 200;
  int source_pretrain_iters = 3000;
  SegTrainConfig seg;
  double subsample_fraction = 1.0;
  bool use_src_term = true;  // second term of the fine-tuning loss
  bool eval_every_stage = true;
  GuidanceMode guidance = GuidanceMode::Sgg;
  uint64_t seed = 0;
};

struct StageMetrics {
  int stage = 0;
  double consistency = 0;           // mIoU of g_n on X^n vs source labels
  std::optional<double> test_miou;  // target-test mIoU of g_n
  double finetune_loss_first = 0;
  double finetune_loss_last = 0;
};

// Source pretraining of g_0 with CE loss, SGD momentum and the
// noisy/masked augmentation. schedule feeds the noise augmentation.
ModelHandle pretrain_segmenter(const LoadedSplit& source, const SegNetConfig& arch,
                               const SegTrainConfig& cfg, int iterations, const NoiseSchedule& s,
                               uint64_t seed, double* final_loss = nullptr);

// One stage of Eq.-12-style fine-tuning, in place: every batch pairs a
// translated sub-batch with a source sub-batch against source labels.
void finetune_stage(const ModelHandle& g, const std::vector<ImageTensor>& translated,
                    const std::vector<LabelMap>& translated_labels, const LoadedSplit& source,
                    const SegTrainConfig& cfg, int iterations, bool use_src_term,
                    const NoiseSchedule& s, uint64_t seed, StageMetrics* metrics = nullptr);

struct PTLResult {
  std::string run_dir;
  std::vector<StageMetrics> stages;
  double g0_test_miou = 0;
  double final_test_miou = 0;
  std::string final_checkpoint;
  std::string final_stage_dir;
};

// The full curriculum: for n = 1..N translate the ORIGINAL source set
// with n steps guided by g_{n-1}, then fine-tune to get g_n. Stage
// artifacts land under run_dir/stage_<n>/; a completed stage (metrics
// written) is skipped on resume, so an interrupted run replays to a
// bit-identical g_N.
PTLResult run_ptl(const std::string& run_dir, const LoadedSplit& source,
                  const DatasetManifest& source_manifest, const ModelHandle& dm,
                  ModelHandle g, const PTLConfig& cfg, const GuidanceConfig& gcfg,
                  const NoiseSchedule& s, const LoadedSplit* target_test = nullptr);

// Curriculum-free baseline for ablations: translate once at depth n and
// fine-tune g_0 on the result for finetune_iters iterations. Artifacts
// mirror one PTL stage under run_dir/direct/.
PTLResult run_direct(const std::string& run_dir, const LoadedSplit& source, const ModelHandle& dm,
                     ModelHandle g, int n, int finetune_iters, const PTLConfig& cfg,
                     const GuidanceConfig& gcfg, const NoiseSchedule& s,
                     const LoadedSplit* target_test = nullptr);

std::vector<LabelMap> infer(const ModelHandle& g, const std::vector<ImageTensor>& images);

double test_miou(const ModelHandle& g, const LoadedSplit& test);

}  // namespace dass
