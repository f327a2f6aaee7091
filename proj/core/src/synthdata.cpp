#include "dass/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dass/diffusion.hpp"
#include "dass/errors.hpp"
#include "dass/imageio.hpp"

namespace fs = std::filesystem;

namespace dass {

namespace {

struct Rgb {
  float r, g, b;
};

// Disk/rectangle differ only along red and triangle/background only along
// blue. The target cast pushes disk and triangle across / onto the source
// decision boundary (adaptation pressure), and the rectangle source color
// sits exactly between the two dark target modes, so unguided denoising
// resolves rectangle pixels to either mode at random while label guidance
// consistently breaks the tie toward the labeled class.
constexpr std::array<Rgb, 4> kSourcePalette = {{
    {0.60f, 0.60f, 0.10f},   // background
    {0.06f, -0.60f, -0.55f}, // disk
    {-0.10f, -0.60f, -0.55f}, // rectangle
    {0.60f, 0.60f, -0.10f},  // triangle
}};
constexpr std::array<Rgb, 4> kTargetPalette = {{
    {0.50f, 0.60f, 0.20f},
    {-0.04f, -0.60f, -0.55f},
    {-0.16f, -0.60f, -0.55f},
    {0.50f, 0.60f, 0.00f},
}};

Rgb class_color(Style style, int cls) {
  const auto& pal = style == Style::Source ? kSourcePalette : kTargetPalette;
  if (cls < 4) return pal[cls];
  // extra classes: deterministic pseudo-colors derived from the id
  RngStream r(0xc01c01ull + cls + (style == Style::Target ? 1000 : 0));
  return {static_cast<float>(r.uniform() * 1.6 - 0.8), static_cast<float>(r.uniform() * 1.6 - 0.8),
          static_cast<float>(r.uniform() * 1.6 - 0.8)};
}

struct Shape {
  int cls;
  int kind;  // 0 disk, 1 rect, 2 triangle
  float cx, cy, a, b;
};

bool covers(const Shape& s, int y, int x) {
  switch (s.kind) {
    case 0: {
      float dx = x - s.cx, dy = y - s.cy;
      return dx * dx + dy * dy <= s.a * s.a;
    }
    case 1:
      return std::abs(x - s.cx) <= s.a && std::abs(y - s.cy) <= s.b;
    default: {  // upward triangle with half-width a and height 2b
      float dy = y - (s.cy - s.b);
      if (dy < 0 || dy > 2 * s.b) return false;
      float half = s.a * dy / (2 * s.b);
      return std::abs(x - s.cx) <= half;
    }
  }
}

}  // namespace

std::pair<ImageTensor, LabelMap> generate_scene(const SceneSpec& spec) {
  if (spec.image_size < 16) throw ConfigError("generate_scene: image_size < 16");
  if (spec.num_classes < 2) throw ConfigError("generate_scene: num_classes < 2");
  if (spec.object_count_range.first < 0 ||
      spec.object_count_range.second < spec.object_count_range.first)
    throw ConfigError("generate_scene: bad object_count_range");

  const int S = spec.image_size;
  const int C = spec.num_classes;
  RngStream geo = RngStream(spec.seed).split(0x67656f6dull);
  RngStream sty = RngStream(spec.seed).split(spec.style == Style::Source ? 0x73726331ull
                                                                         : 0x74677431ull);

  const int count =
      static_cast<int>(geo.uniform_int(spec.object_count_range.first, spec.object_count_range.second));
  std::vector<Shape> shapes;
  for (int i = 0; i < count; ++i) {
    Shape sh;
    sh.cls = static_cast<int>(geo.uniform_int(1, C - 1));
    sh.kind = (sh.cls - 1) % 3;
    sh.cx = static_cast<float>(geo.uniform() * (S - 8) + 4);
    sh.cy = static_cast<float>(geo.uniform() * (S - 8) + 4);
    // rectangles stay small; disks and triangles are broad
    if (sh.kind == 1) {
      sh.a = static_cast<float>(geo.uniform() * 2.0 + 3.0);
      sh.b = static_cast<float>(geo.uniform() * 2.0 + 3.0);
    } else if (sh.kind == 0) {
      sh.a = sh.b = static_cast<float>(geo.uniform() * 3.0 + 7.0);
    } else {
      sh.a = static_cast<float>(geo.uniform() * 4.0 + 8.0);
      sh.b = static_cast<float>(geo.uniform() * 3.0 + 6.0);
    }
    shapes.push_back(sh);
  }

  LabelMap label(S, S);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (const auto& sh : shapes)  // later shapes occlude
        if (covers(sh, y, x)) label.at(y, x) = static_cast<uint8_t>(sh.cls);

  // per-scene color jitter, one draw per class regardless of presence
  std::vector<Rgb> jitter(C);
  for (int c = 0; c < C; ++c)
    jitter[c] = {static_cast<float>(sty.uniform() * 0.04 - 0.02),
                 static_cast<float>(sty.uniform() * 0.04 - 0.02),
                 static_cast<float>(sty.uniform() * 0.04 - 0.02)};

  const bool target = spec.style == Style::Target;
  const float grain_amp = target ? 0.06f : 0.02f;
  const float grad_amp = 0.05f;

  ImageTensor img(1, 3, S, S);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      int cls = label.at(y, x);
      Rgb base = class_color(spec.style, cls);
      float grad = target ? grad_amp * (2.0f * x / (S - 1) - 1.0f)
                          : grad_amp * (2.0f * y / (S - 1) - 1.0f);
      float g0 = static_cast<float>(sty.normal()) * grain_amp;
      float g1 = static_cast<float>(sty.normal()) * grain_amp;
      float g2 = static_cast<float>(sty.normal()) * grain_amp;
      img.at(0, 0, y, x) = base.r + jitter[cls].r + grad + g0;
      img.at(0, 1, y, x) = base.g + jitter[cls].g + grad + g1;
      img.at(0, 2, y, x) = base.b + jitter[cls].b + grad + g2;
    }
  img.clip(-1.0f, 1.0f);
  return {std::move(img), std::move(label)};
}

namespace {

std::string split_name(Split s) {
  switch (s) {
    case Split::SourceTrain: return "SOURCE_TRAIN";
    case Split::TargetTrain: return "TARGET_TRAIN";
    default: return "TARGET_TEST";
  }
}

Split split_from_name(const std::string& s) {
  if (s == "SOURCE_TRAIN") return Split::SourceTrain;
  if (s == "TARGET_TRAIN") return Split::TargetTrain;
  if (s == "TARGET_TEST") return Split::TargetTest;
  throw DataError("manifest: unknown split " + s);
}

}  // namespace

void DatasetManifest::save(const std::string& path) const {
  nlohmann::json j;
  j["split"] = split_name(split);
  j["num_classes"] = num_classes;
  j["image_size"] = image_size;
  j["generator_seed"] = generator_seed;
  j["entries"] = nlohmann::json::array();
  for (auto& e : entries) {
    nlohmann::json je{{"image", e.image_path}};
    if (e.label_path) je["label"] = *e.label_path;
    j["entries"].push_back(je);
  }
  std::ofstream os(path);
  if (!os) throw IoError("manifest: cannot write " + path);
  os << j.dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("manifest: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  DatasetManifest m;
  m.split = split_from_name(j.at("split"));
  m.num_classes = j.at("num_classes");
  m.image_size = j.at("image_size");
  m.generator_seed = j.at("generator_seed");
  for (auto& je : j.at("entries")) {
    ManifestEntry e;
    e.image_path = je.at("image");
    if (je.contains("label")) e.label_path = je.at("label");
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::vector<DatasetManifest> generate_dataset(const DatasetConfig& cfg) {
  fs::path out(cfg.out_dir);
  if (fs::exists(out) && !fs::is_empty(out) && !cfg.force)
    throw ConfigError("generate_dataset: output dir not empty (use force): " + cfg.out_dir);
  fs::create_directories(out / "images");
  fs::create_directories(out / "labels");

  RngStream seeds(cfg.master_seed);
  auto geometry_seed = [&](uint64_t split_id, int i) {
    return seeds.split(split_id).split(static_cast<uint64_t>(i)).key;
  };

  std::vector<DatasetManifest> manifests;
  struct SplitPlan {
    Split split;
    int count;
    Style style;
    bool labels;
    uint64_t id;
    const char* prefix;
    const char* file;
  };
  const SplitPlan plans[] = {
      {Split::SourceTrain, cfg.num_source, Style::Source, true, 1, "src", "source_train.json"},
      {Split::TargetTrain, cfg.num_target_train, Style::Target, false, 2, "tgt_train", "target_train.json"},
      {Split::TargetTest, cfg.num_target_test, Style::Target, true, 3, "tgt_test", "target_test.json"},
  };

  for (const auto& plan : plans) {
    DatasetManifest m;
    m.split = plan.split;
    m.num_classes = cfg.num_classes;
    m.image_size = cfg.image_size;
    m.generator_seed = cfg.master_seed;
    for (int i = 0; i < plan.count; ++i) {
      SceneSpec spec;
      spec.seed = geometry_seed(plan.id, i);
      spec.image_size = cfg.image_size;
      spec.num_classes = cfg.num_classes;
      spec.object_count_range = cfg.object_count_range;
      spec.style = plan.style;
      auto [img, label] = generate_scene(spec);

      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04d.png", plan.prefix, i);
      ManifestEntry e;
      e.image_path = std::string("images/") + name;
      write_image_png(img, (out / e.image_path).string());
      if (plan.labels) {
        e.label_path = std::string("labels/") + name;
        write_label_png(label, (out / *e.label_path).string());
      }
      m.entries.push_back(std::move(e));
    }
    m.save((out / plan.file).string());
    manifests.push_back(std::move(m));
  }
  return manifests;
}

LoadedSplit load_split(const DatasetManifest& m, const std::string& dir, bool require_labels) {
  LoadedSplit out;
  for (auto& e : m.entries) {
    out.images.push_back(read_image_png(dir + "/" + e.image_path));
    if (e.label_path)
      out.labels.push_back(read_label_png(dir + "/" + *e.label_path));
    else if (require_labels)
      throw DataError("load_split: entry without label: " + e.image_path);
  }
  return out;
}

ImageTensor augment(const ImageTensor& image, const LabelMap& label, const NoiseSchedule& s,
                    RngStream& rng, const AugmentConfig& cfg) {
  if (cfg.fraction < 0.0 || cfg.fraction > 1.0) throw ConfigError("augment: bad fraction");
  if (rng.uniform() >= cfg.fraction) return image;

  const int t_max = cfg.t_aug_max > 0 ? cfg.t_aug_max : std::max(1, s.T / 4);
  const int mode = static_cast<int>(rng.uniform_int(0, 2));
  ImageTensor out = image;

  if (mode == 0 || mode == 2) {
    int t = static_cast<int>(rng.uniform_int(1, t_max));
    ImageTensor eps = rng.normal_like(out);
    out = q_sample(out, t, eps, s);
  }
  if (mode == 1 || mode == 2) {
    std::array<bool, 256> seen{};
    for (auto v : label.v) seen[v] = true;
    std::vector<int> present;
    for (int c = 0; c < 256; ++c)
      if (seen[c]) present.push_back(c);
    int c = present[rng.uniform_int(0, static_cast<int64_t>(present.size()) - 1)];
    for (int ci = 0; ci < out.c; ++ci)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
          if (label.at(y, x) != c) out.at(0, ci, y, x) = 0.0f;
  }
  return out;
}

}  // namespace dass
