#include "dass/translate.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dass/errors.hpp"
#include "dass/imageio.hpp"

namespace fs = std::filesystem;

namespace dass {

ImageTensor translate_unguided(const TranslationRequest& req) {
  const ImageTensor& x0 = *req.x0;
  if (req.n == 0) return x0;
  const NoiseSchedule& s = *req.schedule;
  if (req.n < 0 || req.n > s.T) throw ContractError("translate: n out of range");
  if (req.model->kind != ModelKind::NoiseEstimator)
    throw ContractError("translate: model is not a noise estimator");

  RngStream eps_rng = req.rng.split(0);
  ImageTensor x = q_sample(x0, req.n, eps_rng.normal_like(x0), s);
  for (int k = req.n; k >= 1; --k) {
    ImageTensor eps_pred = req.model->apply(x, {k});
    ImageTensor mu = posterior_mean(x, k, eps_pred, s);
    RngStream step_rng = req.rng.split(static_cast<uint64_t>(k));
    x = reverse_step(x, k, mu, s, step_rng);
  }
  x.clip(-1.0f, 1.0f);
  return x;
}

StageOutput translate_dataset(const DatasetManifest& source, const std::string& source_dir,
                              int n, const ModelHandle& model, const NoiseSchedule& s,
                              RngStream rng, double subsample_fraction,
                              const std::string& out_root) {
  if (subsample_fraction <= 0.0 || subsample_fraction > 1.0)
    throw ConfigError("translate_dataset: bad subsample_fraction");

  StageOutput out;
  out.dir = out_root + "/stage_" + std::to_string(n);
  fs::create_directories(fs::path(out.dir) / "images");

  const int total = static_cast<int>(source.entries.size());
  int keep = std::max(1, static_cast<int>(total * subsample_fraction + 0.5));
  // deterministic evenly-spaced subsample
  for (int j = 0; j < keep; ++j) out.source_indices.push_back(j * total / keep);

  for (int idx : out.source_indices) {
    const auto& e = source.entries[idx];
    ImageTensor x0 = read_image_png(source_dir + "/" + e.image_path);
    TranslationRequest req;
    req.n = n;
    req.x0 = &x0;
    req.model = &model;
    req.schedule = &s;
    req.rng = rng.split(static_cast<uint64_t>(idx));
    ImageTensor y = translate_unguided(req);
    char name[64];
    std::snprintf(name, sizeof(name), "images/x_%04d.png", idx);
    write_image_png(y, out.dir + "/" + name);
    out.images.emplace_back(name);
  }

  nlohmann::json j;
  j["n"] = n;
  j["seed"] = rng.key;
  j["model_fingerprint"] = model.schedule_fp;
  j["subsample_fraction"] = subsample_fraction;
  j["source_indices"] = out.source_indices;
  j["images"] = out.images;
  std::ofstream os(out.dir + "/manifest.json");
  if (!os) throw IoError("translate_dataset: cannot write manifest in " + out.dir);
  os << j.dump(2) << "\n";
  return out;
}

}  // namespace dass
