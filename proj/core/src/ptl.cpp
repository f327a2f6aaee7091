#include "dass/ptl.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dass/errors.hpp"
#include "dass/imageio.hpp"
#include "dass/losses.hpp"

namespace fs = std::filesystem;

namespace dass {

namespace {

ImageTensor stack_batch(const std::vector<const ImageTensor*>& items) {
  const ImageTensor& first = *items[0];
  ImageTensor batch(static_cast<int>(items.size()), first.c, first.h, first.w);
  const size_t stride = static_cast<size_t>(first.c) * first.h * first.w;
  for (size_t i = 0; i < items.size(); ++i)
    std::copy(items[i]->v.begin(), items[i]->v.end(), batch.v.begin() + i * stride);
  return batch;
}

double seg_train_step(const ModelHandle& g, std::vector<nn::ParamRef<float>>& params,
                      nn::SgdMomentum<float>& opt, const ImageTensor& batch,
                      const std::vector<LabelMap>& labels) {
  ImageTensor logits = g.seg->forward(batch);
  auto [loss, glogits] = softmax_ce_loss(logits, labels);
  g.seg->backward(glogits);
  opt.step(params);
  nn::zero_grads(params);
  return loss;
}

}  // namespace

ModelHandle pretrain_segmenter(const LoadedSplit& source, const SegNetConfig& arch,
                               const SegTrainConfig& cfg, int iterations, const NoiseSchedule& s,
                               uint64_t seed, double* final_loss) {
  if (source.images.empty() || source.labels.size() != source.images.size())
    throw DataError("pretrain_segmenter: need a labeled source split");
  ModelHandle g = ModelHandle::make_segmenter(arch, seed);
  g.stage = 0;
  auto params = g.params();
  nn::SgdMomentum<float> opt;
  opt.lr = cfg.lr;
  opt.momentum = cfg.momentum;

  RngStream rng = RngStream(seed).split(0x70726574ull);
  AugmentConfig aug{cfg.aug_fraction, 0};
  double loss = 0;
  for (int it = 0; it < iterations; ++it) {
    std::vector<ImageTensor> imgs;
    std::vector<const ImageTensor*> ptrs;
    std::vector<LabelMap> labels;
    for (int bi = 0; bi < cfg.batch_size; ++bi) {
      int idx = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(source.images.size()) - 1));
      imgs.push_back(augment(source.images[idx], source.labels[idx], s, rng, aug));
      labels.push_back(source.labels[idx]);
    }
    for (auto& im : imgs) ptrs.push_back(&im);
    loss = seg_train_step(g, params, opt, stack_batch(ptrs), labels);
  }
  if (final_loss) *final_loss = loss;
  return g;
}

void finetune_stage(const ModelHandle& g, const std::vector<ImageTensor>& translated,
                    const std::vector<LabelMap>& translated_labels, const LoadedSplit& source,
                    const SegTrainConfig& cfg, int iterations, bool use_src_term,
                    const NoiseSchedule& s, uint64_t seed, StageMetrics* metrics) {
  if (translated.size() != translated_labels.size())
    throw DataError("finetune_stage: image/label pairing broken");
  auto params = g.params();
  nn::SgdMomentum<float> opt;
  opt.lr = cfg.lr;
  opt.momentum = cfg.momentum;
  RngStream rng = RngStream(seed).split(0x66696e65ull);
  AugmentConfig aug{cfg.aug_fraction, 0};

  for (int it = 0; it < iterations; ++it) {
    std::vector<ImageTensor> imgs;
    std::vector<const ImageTensor*> ptrs;
    std::vector<LabelMap> labels;
    for (int bi = 0; bi < cfg.batch_size; ++bi) {
      int idx = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(translated.size()) - 1));
      imgs.push_back(translated[idx]);
      labels.push_back(translated_labels[idx]);
    }
    if (use_src_term) {
      for (int bi = 0; bi < cfg.batch_size; ++bi) {
        int idx =
            static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(source.images.size()) - 1));
        imgs.push_back(augment(source.images[idx], source.labels[idx], s, rng, aug));
        labels.push_back(source.labels[idx]);
      }
    }
    for (auto& im : imgs) ptrs.push_back(&im);
    double loss = seg_train_step(g, params, opt, stack_batch(ptrs), labels);
    if (metrics) {
      if (it == 0) metrics->finetune_loss_first = loss;
      metrics->finetune_loss_last = loss;
    }
  }
}

std::vector<LabelMap> infer(const ModelHandle& g, const std::vector<ImageTensor>& images) {
  std::vector<LabelMap> out;
  out.reserve(images.size());
  for (auto& im : images) out.push_back(argmax_labels(g.apply(im)));
  return out;
}

double test_miou(const ModelHandle& g, const LoadedSplit& test) {
  ConfusionMatrix cm(g.num_classes());
  for (size_t i = 0; i < test.images.size(); ++i)
    cm.accumulate(argmax_labels(g.apply(test.images[i])), test.labels[i]);
  return miou(cm).mean;
}

namespace {

ImageTensor stage_translate_one(const ImageTensor& x0, int n, const ModelHandle& dm,
                                const ModelHandle& g, const LabelMap& y, GuidanceMode mode,
                                const GuidanceConfig& gcfg, const NoiseSchedule& s,
                                RngStream rng) {
  if (mode == GuidanceMode::None) {
    TranslationRequest req;
    req.n = n;
    req.x0 = &x0;
    req.model = &dm;
    req.schedule = &s;
    req.rng = rng;
    return translate_unguided(req);
  }
  if (mode == GuidanceMode::Sgg) return guided_translate(x0, n, dm, g, y, gcfg, s, rng);

  // single-kind arms (ablations): same loop and RNG lineage, forced kind
  RngStream eps_rng = rng.split(0);
  ImageTensor x = q_sample(x0, n, eps_rng.normal_like(x0), s);
  for (int k = n; k >= 1; --k) {
    RngStream step_rng = rng.split(static_cast<uint64_t>(k));
    if (mode == GuidanceMode::LcgOnly)
      x = lcg_step(x, k, dm, g, y, gcfg, s, step_rng);
    else
      x = gsg_step(x, k, dm, g, y, gcfg, s, step_rng);
  }
  x.clip(-1.0f, 1.0f);
  return x;
}

void write_stage_metrics(const std::string& path, const StageMetrics& m) {
  nlohmann::json j{{"stage", m.stage},
                   {"consistency", m.consistency},
                   {"finetune_loss_first", m.finetune_loss_first},
                   {"finetune_loss_last", m.finetune_loss_last}};
  if (m.test_miou) j["test_miou"] = *m.test_miou;
  std::ofstream os(path);
  os << j.dump(2) << "\n";
}

}  // namespace

PTLResult run_ptl(const std::string& run_dir, const LoadedSplit& source,
                  const DatasetManifest& source_manifest, const ModelHandle& dm,
                  ModelHandle g, const PTLConfig& cfg, const GuidanceConfig& gcfg,
                  const NoiseSchedule& s, const LoadedSplit* target_test) {
  if (cfg.N < 1 || cfg.N > s.T) throw ConfigError("run_ptl: need 1 <= N <= T");
  g = g.clone();  // fine-tuning is in place; never mutate the caller's g_0
  fs::create_directories(run_dir);
  std::ofstream log(run_dir + "/run.log", std::ios::app);

  PTLResult result;
  result.run_dir = run_dir;
  if (target_test) result.g0_test_miou = test_miou(g, *target_test);

  const int total = static_cast<int>(source.images.size());
  int keep = std::max(1, static_cast<int>(total * cfg.subsample_fraction + 0.5));
  std::vector<int> indices;
  for (int j = 0; j < keep; ++j) indices.push_back(j * total / keep);

  RngStream base(cfg.seed);
  for (int n = 1; n <= cfg.N; ++n) {
    const std::string stage_dir = run_dir + "/stage_" + std::to_string(n);
    const std::string ckpt_path = stage_dir + "/g_" + std::to_string(n) + ".ckpt";
    const std::string metrics_path = stage_dir + "/metrics.json";

    StageMetrics m;
    m.stage = n;
    if (fs::exists(metrics_path) && fs::exists(ckpt_path)) {
      // completed stage: restore g_n and move on
      g = load_checkpoint(ckpt_path);
      std::ifstream is(metrics_path);
      nlohmann::json j = nlohmann::json::parse(is);
      m.consistency = j.value("consistency", 0.0);
      if (j.contains("test_miou")) m.test_miou = j["test_miou"];
      result.stages.push_back(m);
      if (log) log << nlohmann::json({{"event", "resume_skip"}, {"stage", n}}).dump() << "\n";
      continue;
    }
    fs::create_directories(stage_dir + "/images");

    // Eq. 11: translate the ORIGINAL source images with phi^n guided by g_{n-1}
    RngStream trans_rng = base.split(0x7472616eull).split(static_cast<uint64_t>(n));
    nlohmann::json stage_manifest;
    stage_manifest["n"] = n;
    stage_manifest["seed"] = trans_rng.key;
    stage_manifest["source_indices"] = indices;
    stage_manifest["images"] = nlohmann::json::array();
    for (int idx : indices) {
      ImageTensor out = stage_translate_one(source.images[idx], n, dm, g, source.labels[idx],
                                            cfg.guidance, gcfg, s, trans_rng.split(idx));
      char name[64];
      std::snprintf(name, sizeof(name), "images/x_%04d.png", idx);
      write_image_png(out, stage_dir + "/" + name);
      stage_manifest["images"].push_back(name);
    }
    {
      std::ofstream os(stage_dir + "/manifest.json");
      os << stage_manifest.dump(2) << "\n";
    }

    // reload from disk so an uninterrupted run and a resumed run see the
    // same quantized pixels
    std::vector<ImageTensor> translated;
    std::vector<LabelMap> tlabels;
    for (int idx : indices) {
      char name[64];
      std::snprintf(name, sizeof(name), "images/x_%04d.png", idx);
      translated.push_back(read_image_png(stage_dir + "/" + name));
      tlabels.push_back(source.labels[idx]);
    }

    uint64_t ft_seed = base.split(0x66746e65ull).split(static_cast<uint64_t>(n)).key;
    finetune_stage(g, translated, tlabels, source, cfg.seg, cfg.finetune_iters_per_stage,
                   cfg.use_src_term, s, ft_seed, &m);

    m.consistency = consistency_score(g, translated, tlabels);
    if (target_test && cfg.eval_every_stage) m.test_miou = test_miou(g, *target_test);

    g.stage = n;
    save_checkpoint(g, ckpt_path);
    write_stage_metrics(metrics_path, m);
    result.stages.push_back(m);
    if (log)
      log << nlohmann::json({{"event", "stage_done"},
                             {"stage", n},
                             {"consistency", m.consistency},
                             {"test_miou", m.test_miou ? *m.test_miou : -1.0}})
                 .dump()
          << "\n";
  }

  result.final_checkpoint = run_dir + "/stage_" + std::to_string(cfg.N) + "/g_" +
                            std::to_string(cfg.N) + ".ckpt";
  result.final_stage_dir = run_dir + "/stage_" + std::to_string(cfg.N);
  if (target_test) result.final_test_miou = test_miou(g, *target_test);
  (void)source_manifest;
  return result;
}

PTLResult run_direct(const std::string& run_dir, const LoadedSplit& source, const ModelHandle& dm,
                     ModelHandle g, int n, int finetune_iters, const PTLConfig& cfg,
                     const GuidanceConfig& gcfg, const NoiseSchedule& s,
                     const LoadedSplit* target_test) {
  if (n < 1 || n > s.T) throw ConfigError("run_direct: need 1 <= n <= T");
  g = g.clone();
  const std::string stage_dir = run_dir + "/direct";
  fs::create_directories(stage_dir + "/images");

  PTLResult result;
  result.run_dir = run_dir;
  if (target_test) result.g0_test_miou = test_miou(g, *target_test);

  const int total = static_cast<int>(source.images.size());
  int keep = std::max(1, static_cast<int>(total * cfg.subsample_fraction + 0.5));
  std::vector<int> indices;
  for (int j = 0; j < keep; ++j) indices.push_back(j * total / keep);

  // same RNG derivation as the PTL stage at depth n
  RngStream base(cfg.seed);
  RngStream trans_rng = base.split(0x7472616eull).split(static_cast<uint64_t>(n));
  std::vector<ImageTensor> translated;
  std::vector<LabelMap> tlabels;
  for (int idx : indices) {
    ImageTensor out = stage_translate_one(source.images[idx], n, dm, g, source.labels[idx],
                                          cfg.guidance, gcfg, s, trans_rng.split(idx));
    char name[64];
    std::snprintf(name, sizeof(name), "images/x_%04d.png", idx);
    write_image_png(out, stage_dir + "/" + name);
    translated.push_back(read_image_png(stage_dir + "/" + name));
    tlabels.push_back(source.labels[idx]);
  }

  StageMetrics m;
  m.stage = n;
  uint64_t ft_seed = base.split(0x66746e65ull).split(static_cast<uint64_t>(n)).key;
  finetune_stage(g, translated, tlabels, source, cfg.seg, finetune_iters, cfg.use_src_term, s,
                 ft_seed, &m);
  m.consistency = consistency_score(g, translated, tlabels);
  if (target_test) m.test_miou = test_miou(g, *target_test);

  g.stage = n;
  const std::string ckpt_path = stage_dir + "/g_direct.ckpt";
  save_checkpoint(g, ckpt_path);
  write_stage_metrics(stage_dir + "/metrics.json", m);
  result.stages.push_back(m);
  result.final_checkpoint = ckpt_path;
  result.final_stage_dir = stage_dir;
  if (target_test) result.final_test_miou = *m.test_miou;
  return result;
}

}  // namespace dass
