#include "dass/runconfig.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "dass/errors.hpp"

namespace dass {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

std::string sign_mode_name(SignMode m) {
  return m == SignMode::LossDescent ? "loss_descent" : "paper_literal";
}
SignMode sign_mode_from(const std::string& s) {
  if (s == "loss_descent") return SignMode::LossDescent;
  if (s == "paper_literal") return SignMode::PaperLiteral;
  throw ConfigError("config: bad sign_mode " + s);
}

std::string arrangement_name(Arrangement a) {
  switch (a) {
    case Arrangement::Alternate: return "alternate";
    case Arrangement::LcgFirst: return "lcg_first";
    case Arrangement::GsgFirst: return "gsg_first";
    default: return "random_mix";
  }
}
Arrangement arrangement_from(const std::string& s) {
  if (s == "alternate") return Arrangement::Alternate;
  if (s == "lcg_first") return Arrangement::LcgFirst;
  if (s == "gsg_first") return Arrangement::GsgFirst;
  if (s == "random_mix") return Arrangement::RandomMix;
  throw ConfigError("config: bad arrangement " + s);
}

std::string guidance_mode_name(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::Sgg: return "sgg";
    case GuidanceMode::LcgOnly: return "lcg_only";
    case GuidanceMode::GsgOnly: return "gsg_only";
    default: return "none";
  }
}
GuidanceMode guidance_mode_from(const std::string& s) {
  if (s == "sgg") return GuidanceMode::Sgg;
  if (s == "lcg_only") return GuidanceMode::LcgOnly;
  if (s == "gsg_only") return GuidanceMode::GsgOnly;
  if (s == "none") return GuidanceMode::None;
  throw ConfigError("config: bad guidance mode " + s);
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: malformed json");
  RunConfig c;
  check_keys(j, "root",
             {"dataset", "schedule", "models", "diffusion_train", "ptl", "guidance",
              "output_root", "seed"});
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    check_keys(d, "dataset",
               {"out_dir", "num_source", "num_target_train", "num_target_test", "image_size",
                "num_classes", "object_count_min", "object_count_max", "master_seed"});
    c.dataset.out_dir = d.value("out_dir", c.dataset.out_dir);
    c.dataset.num_source = d.value("num_source", c.dataset.num_source);
    c.dataset.num_target_train = d.value("num_target_train", c.dataset.num_target_train);
    c.dataset.num_target_test = d.value("num_target_test", c.dataset.num_target_test);
    c.dataset.image_size = d.value("image_size", c.dataset.image_size);
    c.dataset.num_classes = d.value("num_classes", c.dataset.num_classes);
    c.dataset.object_count_range.first =
        d.value("object_count_min", c.dataset.object_count_range.first);
    c.dataset.object_count_range.second =
        d.value("object_count_max", c.dataset.object_count_range.second);
    c.dataset.master_seed = d.value("master_seed", c.dataset.master_seed);
  }
  if (j.contains("schedule")) {
    const json& d = j["schedule"];
    check_keys(d, "schedule", {"T", "beta1", "betaT"});
    c.T = d.value("T", c.T);
    c.beta1 = d.value("beta1", c.beta1);
    c.betaT = d.value("betaT", c.betaT);
  }
  if (j.contains("models")) {
    const json& d = j["models"];
    check_keys(d, "models", {"unet_base", "temb_dim", "temb_hidden", "seg_base"});
    c.unet.base = d.value("unet_base", c.unet.base);
    c.unet.temb_dim = d.value("temb_dim", c.unet.temb_dim);
    c.unet.temb_hidden = d.value("temb_hidden", c.unet.temb_hidden);
    c.seg_arch.base = d.value("seg_base", c.seg_arch.base);
  }
  c.seg_arch.num_classes = c.dataset.num_classes;
  if (j.contains("diffusion_train")) {
    const json& d = j["diffusion_train"];
    check_keys(d, "diffusion_train",
               {"iterations", "batch_size", "lr", "adam_beta1", "adam_beta2", "seed", "log_every"});
    c.diffusion_train.iterations = d.value("iterations", c.diffusion_train.iterations);
    c.diffusion_train.batch_size = d.value("batch_size", c.diffusion_train.batch_size);
    c.diffusion_train.lr = d.value("lr", c.diffusion_train.lr);
    c.diffusion_train.adam_beta1 = d.value("adam_beta1", c.diffusion_train.adam_beta1);
    c.diffusion_train.adam_beta2 = d.value("adam_beta2", c.diffusion_train.adam_beta2);
    c.diffusion_train.seed = d.value("seed", c.diffusion_train.seed);
    c.diffusion_train.log_every = d.value("log_every", c.diffusion_train.log_every);
  }
  if (j.contains("ptl")) {
    const json& d = j["ptl"];
    check_keys(d, "ptl",
               {"N", "finetune_iters_per_stage", "source_pretrain_iters", "batch_size", "lr",
                "momentum", "aug_fraction", "subsample_fraction", "use_src_term",
                "eval_every_stage", "guidance", "seed"});
    c.ptl.N = d.value("N", c.ptl.N);
    c.ptl.finetune_iters_per_stage =
        d.value("finetune_iters_per_stage", c.ptl.finetune_iters_per_stage);
    c.ptl.source_pretrain_iters = d.value("source_pretrain_iters", c.ptl.source_pretrain_iters);
    c.ptl.seg.batch_size = d.value("batch_size", c.ptl.seg.batch_size);
    c.ptl.seg.lr = d.value("lr", c.ptl.seg.lr);
    c.ptl.seg.momentum = d.value("momentum", c.ptl.seg.momentum);
    c.ptl.seg.aug_fraction = d.value("aug_fraction", c.ptl.seg.aug_fraction);
    c.ptl.subsample_fraction = d.value("subsample_fraction", c.ptl.subsample_fraction);
    c.ptl.use_src_term = d.value("use_src_term", c.ptl.use_src_term);
    c.ptl.eval_every_stage = d.value("eval_every_stage", c.ptl.eval_every_stage);
    if (d.contains("guidance")) c.ptl.guidance = guidance_mode_from(d["guidance"]);
    c.ptl.seed = d.value("seed", c.ptl.seed);
  }
  if (j.contains("guidance")) {
    const json& d = j["guidance"];
    check_keys(d, "guidance",
               {"lambda", "sign_mode", "arrangement", "random_mix_seed", "shared_class_noise"});
    c.guidance.lambda = d.value("lambda", c.guidance.lambda);
    if (d.contains("sign_mode")) c.guidance.sign_mode = sign_mode_from(d["sign_mode"]);
    if (d.contains("arrangement")) c.guidance.arrangement = arrangement_from(d["arrangement"]);
    c.guidance.random_mix_seed = d.value("random_mix_seed", c.guidance.random_mix_seed);
    c.guidance.shared_class_noise = d.value("shared_class_noise", c.guidance.shared_class_noise);
  }
  c.output_root = j.value("output_root", c.output_root);
  c.seed = j.value("seed", c.seed);
  if (c.guidance.lambda < 0) throw ConfigError("config: lambda must be >= 0");
  return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string RunConfig::to_json_text() const {
  json j;
  j["dataset"] = {{"out_dir", dataset.out_dir},
                  {"num_source", dataset.num_source},
                  {"num_target_train", dataset.num_target_train},
                  {"num_target_test", dataset.num_target_test},
                  {"image_size", dataset.image_size},
                  {"num_classes", dataset.num_classes},
                  {"object_count_min", dataset.object_count_range.first},
                  {"object_count_max", dataset.object_count_range.second},
                  {"master_seed", dataset.master_seed}};
  j["schedule"] = {{"T", T}, {"beta1", beta1}, {"betaT", betaT}};
  j["models"] = {{"unet_base", unet.base},
                 {"temb_dim", unet.temb_dim},
                 {"temb_hidden", unet.temb_hidden},
                 {"seg_base", seg_arch.base}};
  j["diffusion_train"] = {{"iterations", diffusion_train.iterations},
                          {"batch_size", diffusion_train.batch_size},
                          {"lr", diffusion_train.lr},
                          {"adam_beta1", diffusion_train.adam_beta1},
                          {"adam_beta2", diffusion_train.adam_beta2},
                          {"seed", diffusion_train.seed},
                          {"log_every", diffusion_train.log_every}};
  j["ptl"] = {{"N", ptl.N},
              {"finetune_iters_per_stage", ptl.finetune_iters_per_stage},
              {"source_pretrain_iters", ptl.source_pretrain_iters},
              {"batch_size", ptl.seg.batch_size},
              {"lr", ptl.seg.lr},
              {"momentum", ptl.seg.momentum},
              {"aug_fraction", ptl.seg.aug_fraction},
              {"subsample_fraction", ptl.subsample_fraction},
              {"use_src_term", ptl.use_src_term},
              {"eval_every_stage", ptl.eval_every_stage},
              {"guidance", guidance_mode_name(ptl.guidance)},
              {"seed", ptl.seed}};
  j["guidance"] = {{"lambda", guidance.lambda},
                   {"sign_mode", sign_mode_name(guidance.sign_mode)},
                   {"arrangement", arrangement_name(guidance.arrangement)},
                   {"random_mix_seed", guidance.random_mix_seed},
                   {"shared_class_noise", guidance.shared_class_noise}};
  j["output_root"] = output_root;
  j["seed"] = seed;
  return j.dump(2);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("config: cannot write " + path);
  os << to_json_text() << "\n";
}

}  // namespace dass
