#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dass/rng.hpp"
#include "dass/schedule.hpp"
#include "dass/tensor.hpp"

namespace dass {

enum class Style { Source, Target };

// Deterministic procedural scene: background plus 1..k shapes (disk,
// rectangle, triangle), one class per shape kind. Geometry depends only
// on the seed; style changes palette, background texture and grain, so
// both styles of one seed share the same LabelMap.
struct SceneSpec {
  uint64_t seed = 0;
  int image_size = 32;
  int num_classes = 4;  // class 0 = background
  std::pair<int, int> object_count_range = {2, 5};
  Style style = Style::Source;
};

std::pair<ImageTensor, LabelMap> generate_scene(const SceneSpec& spec);

enum class Split { SourceTrain, TargetTrain, TargetTest };

struct ManifestEntry {
  std::string image_path;
  std::optional<std::string> label_path;  // absent for TARGET_TRAIN
};

struct DatasetManifest {
  Split split = Split::SourceTrain;
  std::vector<ManifestEntry> entries;
  int num_classes = 4;
  int image_size = 32;
  uint64_t generator_seed = 0;

  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
};

struct DatasetConfig {
  std::string out_dir;
  int num_source = 200;
  int num_target_train = 200;
  int num_target_test = 100;
  int image_size = 32;
  int num_classes = 4;
  std::pair<int, int> object_count_range = {2, 5};
  uint64_t master_seed = 0;
  bool force = false;
};

// Writes images/labels plus one manifest per split (source_train.json,
// target_train.json, target_test.json) under cfg.out_dir.
std::vector<DatasetManifest> generate_dataset(const DatasetConfig& cfg);

struct LoadedSplit {
  std::vector<ImageTensor> images;
  std::vector<LabelMap> labels;  // empty when the split carries no labels
};

// Reads a split into memory. Requires labels when require_labels is set.
LoadedSplit load_split(const DatasetManifest& m, const std::string& dir, bool require_labels);

enum class AugmentMode { Noise, Mask, Both };

struct AugmentConfig {
  double fraction = 0.10;
  int t_aug_max = 0;  // 0 means schedule.T / 4
};

// With probability cfg.fraction replaces the image by a noisy and/or
// class-masked copy; the label is never touched.
ImageTensor augment(const ImageTensor& image, const LabelMap& label, const NoiseSchedule& s,
                    RngStream& rng, const AugmentConfig& cfg);

}  // namespace dass
