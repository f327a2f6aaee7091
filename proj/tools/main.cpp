// dass: command-line front end for the translation / adaptation pipeline.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dass/imageio.hpp"
#include "dass/runconfig.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dass;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string output_root;
  uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  cmd->add_option("--output-root", c.output_root,
                  "Output root (overrides config and DASS_OUTPUT_ROOT)");
  cmd->add_option("--seed", c.seed, "Master seed override")->each([&c](const std::string&) {
    c.seed_set = true;
  });
}

RunConfig resolve_config(const CommonOpts& c) {
  RunConfig cfg =
      c.config_path.empty() ? RunConfig() : RunConfig::from_json_file(c.config_path);
  if (const char* env = std::getenv("DASS_OUTPUT_ROOT")) cfg.output_root = env;
  if (!c.output_root.empty()) cfg.output_root = c.output_root;
  if (c.seed_set) cfg.seed = c.seed;
  return cfg;
}

DatasetManifest manifest_for(const std::string& data_dir, const std::string& name) {
  return DatasetManifest::load(data_dir + "/" + name + ".json");
}

ModelHandle load_model(const std::string& path, ModelKind want, const char* what) {
  ModelHandle h = load_checkpoint(path);
  if (h.kind != want) throw ConfigError(std::string("checkpoint ") + path + " is not a " + what);
  return h;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

void echo_config(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  cfg.save(dir + "/config.json");
}

// ---- subcommands ----

int cmd_gen_data(const RunConfig& cfg_in, const std::string& out, bool force) {
  RunConfig cfg = cfg_in;
  if (!out.empty()) cfg.dataset.out_dir = out;
  if (cfg.dataset.out_dir.empty()) cfg.dataset.out_dir = cfg.output_root + "/data";
  cfg.dataset.force = force;
  if (cfg.dataset.master_seed == 0) cfg.dataset.master_seed = cfg.seed;
  auto manifests = generate_dataset(cfg.dataset);
  echo_config(cfg, cfg.dataset.out_dir);
  json j{{"out_dir", cfg.dataset.out_dir},
         {"source_train", manifests[0].entries.size()},
         {"target_train", manifests[1].entries.size()},
         {"target_test", manifests[2].entries.size()}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_train_diffusion(const RunConfig& cfg_in, const std::string& data, std::string out) {
  RunConfig cfg = cfg_in;
  if (out.empty()) out = cfg.output_root + "/diffusion";
  fs::create_directories(out);
  NoiseSchedule s = cfg.schedule();
  DiffusionTrainConfig tc = cfg.diffusion_train;
  if (tc.log_path.empty()) tc.log_path = out + "/train.log";
  TrainStats stats;
  ModelHandle dm = train_diffusion(manifest_for(data, "target_train"), data, s, cfg.unet, tc,
                                   &stats);
  save_checkpoint(dm, out + "/dm.ckpt");
  echo_config(cfg, out);
  json j{{"checkpoint", out + "/dm.ckpt"},
         {"initial_loss", stats.initial_loss},
         {"final_loss", stats.final_loss},
         {"reduction", 1.0 - stats.final_loss / stats.initial_loss}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_train_seg(const RunConfig& cfg_in, const std::string& data, std::string out) {
  RunConfig cfg = cfg_in;
  if (out.empty()) out = cfg.output_root + "/seg";
  NoiseSchedule s = cfg.schedule();
  LoadedSplit source = load_split(manifest_for(data, "source_train"), data, true);
  double final_loss = 0;
  ModelHandle g0 = pretrain_segmenter(source, cfg.seg_arch, cfg.ptl.seg,
                                      cfg.ptl.source_pretrain_iters, s, cfg.seed, &final_loss);
  fs::create_directories(out);
  save_checkpoint(g0, out + "/g0.ckpt");
  echo_config(cfg, out);
  json j{{"checkpoint", out + "/g0.ckpt"}, {"final_loss", final_loss}};
  if (fs::exists(data + "/target_test.json")) {
    LoadedSplit test = load_split(manifest_for(data, "target_test"), data, true);
    j["target_test_miou"] = test_miou(g0, test);
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_translate(const RunConfig& cfg_in, const std::string& data, const std::string& dm_path,
                  const std::string& seg_path, int n, std::string out, double subsample) {
  RunConfig cfg = cfg_in;
  if (out.empty()) out = cfg.output_root + "/translate";
  NoiseSchedule s = cfg.schedule();
  ModelHandle dm = load_model(dm_path, ModelKind::NoiseEstimator, "noise estimator");
  DatasetManifest source = manifest_for(data, "source_train");
  RngStream rng = RngStream(cfg.seed).split(0x7472616eull).split(static_cast<uint64_t>(n));

  StageOutput so;
  if (seg_path.empty()) {
    so = translate_dataset(source, data, n, dm, s, rng, subsample, out);
  } else {
    // guided variant of translate_dataset with the same layout and RNG use
    ModelHandle g = load_model(seg_path, ModelKind::Segmenter, "segmenter");
    LoadedSplit src = load_split(source, data, true);
    const int total = static_cast<int>(src.images.size());
    int keep = std::max(1, static_cast<int>(total * subsample + 0.5));
    so.dir = out + "/stage_" + std::to_string(n);
    fs::create_directories(so.dir + "/images");
    json jm{{"n", n}, {"seed", rng.key}, {"guided", true}};
    jm["images"] = json::array();
    jm["source_indices"] = json::array();
    for (int j = 0; j < keep; ++j) {
      int idx = j * total / keep;
      ImageTensor xn = guided_translate(src.images[idx], n, dm, g, src.labels[idx], cfg.guidance,
                                        s, rng.split(idx));
      char name[64];
      std::snprintf(name, sizeof(name), "images/x_%04d.png", idx);
      write_image_png(xn, so.dir + "/" + name);
      so.images.push_back(name);
      so.source_indices.push_back(idx);
      jm["images"].push_back(name);
      jm["source_indices"].push_back(idx);
    }
    std::ofstream(so.dir + "/manifest.json") << jm.dump(2) << "\n";
  }
  echo_config(cfg, so.dir);
  json j{{"stage_dir", so.dir}, {"images", so.images.size()}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

json stage_metrics_json(const PTLResult& r) {
  json stages = json::array();
  for (auto& m : r.stages) {
    json sj{{"stage", m.stage},
            {"consistency", m.consistency},
            {"finetune_loss_first", m.finetune_loss_first},
            {"finetune_loss_last", m.finetune_loss_last}};
    if (m.test_miou) sj["test_miou"] = *m.test_miou;
    stages.push_back(sj);
  }
  return stages;
}

int cmd_ptl_run(const RunConfig& cfg_in, const std::string& data, const std::string& dm_path,
                const std::string& g0_path, std::string run_dir) {
  RunConfig cfg = cfg_in;
  if (run_dir.empty()) run_dir = cfg.output_root + "/ptl";
  NoiseSchedule s = cfg.schedule();
  ModelHandle dm = load_model(dm_path, ModelKind::NoiseEstimator, "noise estimator");
  DatasetManifest sm = manifest_for(data, "source_train");
  LoadedSplit source = load_split(sm, data, true);
  LoadedSplit test = load_split(manifest_for(data, "target_test"), data, true);

  PTLConfig pcfg = cfg.ptl;
  if (pcfg.seed == 0) pcfg.seed = cfg.seed;
  ModelHandle g0 = g0_path.empty()
                       ? pretrain_segmenter(source, cfg.seg_arch, pcfg.seg,
                                            pcfg.source_pretrain_iters, s, cfg.seed)
                       : load_model(g0_path, ModelKind::Segmenter, "segmenter");

  echo_config(cfg, run_dir);
  PTLResult r = run_ptl(run_dir, source, sm, dm, g0, pcfg, cfg.guidance, s, &test);
  json j{{"run_dir", r.run_dir},
         {"g0_test_miou", r.g0_test_miou},
         {"final_test_miou", r.final_test_miou},
         {"final_checkpoint", r.final_checkpoint},
         {"stages", stage_metrics_json(r)}};
  std::ofstream(run_dir + "/summary.json") << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig&, const std::string& data, const std::string& seg_path,
                 const std::string& split, const std::string& out_path) {
  ModelHandle g = load_model(seg_path, ModelKind::Segmenter, "segmenter");
  LoadedSplit sp = load_split(manifest_for(data, split), data, true);
  ConfusionMatrix cm(g.num_classes());
  for (size_t i = 0; i < sp.images.size(); ++i)
    cm.accumulate(argmax_labels(g.apply(sp.images[i])), sp.labels[i]);
  IouResult r = miou(cm);
  json j{{"split", split},
         {"miou", r.mean},
         {"pixel_accuracy", r.pixel_accuracy},
         {"stage", g.stage}};
  json per = json::array();
  for (size_t c = 0; c < r.per_class.size(); ++c)
    per.push_back(std::isnan(r.per_class[c]) ? json(nullptr) : json(r.per_class[c]));
  j["per_class_iou"] = per;
  if (!out_path.empty()) std::ofstream(out_path) << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_grad_check(const RunConfig& cfg, int scenes, int size, double threshold) {
  SegNetConfig arch = cfg.seg_arch;
  SegNet<double> net(arch);
  net.init(RngStream(cfg.seed + 1));
  double worst = 0;
  for (int i = 0; i < scenes; ++i) {
    SceneSpec spec;
    spec.seed = cfg.seed + 100 + i;
    spec.image_size = std::max(size, 32);  // scene generator minimum
    spec.num_classes = arch.num_classes;
    auto [img, lab] = generate_scene(spec);
    // crop to the requested check size to keep the FD sweep affordable
    Tensor<double> x(1, 3, size, size);
    LabelMap y(size, size);
    for (int ci = 0; ci < 3; ++ci)
      for (int yy = 0; yy < size; ++yy)
        for (int xx = 0; xx < size; ++xx) x.at(0, ci, yy, xx) = img.at(0, ci, yy, xx);
    for (int yy = 0; yy < size; ++yy)
      for (int xx = 0; xx < size; ++xx) y.at(yy, xx) = lab.at(yy, xx);

    worst = std::max(worst, grad_check(net, x, y, nullptr, 1e-5));
    for (auto& m : class_masks(y, arch.num_classes))
      worst = std::max(worst, grad_check(net, x, y, &m, 1e-5));
  }
  json j{{"scenes", scenes}, {"size", size}, {"max_rel_error", worst}, {"threshold", threshold}};
  std::cout << j.dump(2) << "\n";
  return worst <= threshold ? 0 : 1;
}

int cmd_ablate(const RunConfig& cfg_in, const std::string& data, const std::string& dm_path,
               const std::string& g0_path, std::string run_dir, const std::string& arms_csv,
               bool arrangements) {
  RunConfig cfg = cfg_in;
  if (run_dir.empty()) run_dir = cfg.output_root + "/ablate";
  NoiseSchedule s = cfg.schedule();
  ModelHandle dm = load_model(dm_path, ModelKind::NoiseEstimator, "noise estimator");
  DatasetManifest sm = manifest_for(data, "source_train");
  LoadedSplit source = load_split(sm, data, true);
  LoadedSplit test = load_split(manifest_for(data, "target_test"), data, true);

  PTLConfig pcfg = cfg.ptl;
  if (pcfg.seed == 0) pcfg.seed = cfg.seed;
  ModelHandle g0 = g0_path.empty()
                       ? pretrain_segmenter(source, cfg.seg_arch, pcfg.seg,
                                            pcfg.source_pretrain_iters, s, cfg.seed)
                       : load_model(g0_path, ModelKind::Segmenter, "segmenter");
  echo_config(cfg, run_dir);

  json table = json::array();
  auto add_row = [&](const std::string& name, double miou_val, double consistency) {
    table.push_back({{"arm", name}, {"test_miou", miou_val}, {"consistency", consistency}});
    std::cout << name << "\tmIoU " << miou_val << "\tconsistency " << consistency << "\n";
  };

  if (arrangements) {
    // four arrangement options under otherwise identical configs
    const std::pair<const char*, Arrangement> opts[] = {
        {"lcg_first", Arrangement::LcgFirst},
        {"gsg_first", Arrangement::GsgFirst},
        {"alternate", Arrangement::Alternate},
        {"random_mix", Arrangement::RandomMix}};
    for (auto& [name, arr] : opts) {
      GuidanceConfig gcfg = cfg.guidance;
      gcfg.arrangement = arr;
      PTLResult r = run_ptl(run_dir + "/" + name, source, sm, dm, g0, pcfg, gcfg, s, &test);
      add_row(name, r.final_test_miou, r.stages.back().consistency);
    }
    std::ofstream(run_dir + "/arrangements.json") << table.dump(2) << "\n";
    return 0;
  }

  std::stringstream ss(arms_csv);
  std::string arm;
  while (std::getline(ss, arm, ',')) {
    if (arm == "baseline") {
      add_row(arm, test_miou(g0, test), 1.0);
      continue;
    }
    PTLConfig c = pcfg;
    PTLResult r;
    if (arm == "full") {
      c.guidance = GuidanceMode::Sgg;
    } else if (arm == "no-lcg") {
      c.guidance = GuidanceMode::GsgOnly;
    } else if (arm == "no-gsg") {
      c.guidance = GuidanceMode::LcgOnly;
    } else if (arm == "no-sgg") {
      c.guidance = GuidanceMode::None;
    } else if (arm == "no-ptl") {
      // one jump to depth N with the full fine-tuning budget
      c.guidance = GuidanceMode::Sgg;
      r = run_direct(run_dir + "/" + arm, source, dm, g0, c.N,
                     c.N * c.finetune_iters_per_stage, c, cfg.guidance, s, &test);
      add_row(arm, r.final_test_miou, r.stages.back().consistency);
      continue;
    } else {
      throw ConfigError("ablate: unknown arm '" + arm + "'");
    }
    r = run_ptl(run_dir + "/" + arm, source, sm, dm, g0, c, cfg.guidance, s, &test);
    add_row(arm, r.final_test_miou, r.stages.back().consistency);
  }
  std::ofstream(run_dir + "/ablation.json") << table.dump(2) << "\n";
  return 0;
}

int cmd_plot(const std::string& run_dir, const std::string& stages_csv, int count,
             std::string out_path) {
  if (out_path.empty()) out_path = run_dir + "/contact_sheet.png";
  std::vector<int> stages = parse_int_list(stages_csv);
  if (stages.empty()) throw ConfigError("plot: no stages given");

  std::vector<std::vector<ImageTensor>> rows;
  for (int n : stages) {
    std::string dir = run_dir + "/stage_" + std::to_string(n);
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw IoError("plot: missing " + dir + "/manifest.json");
    json jm = json::parse(is);
    std::vector<ImageTensor> row;
    for (auto& rel : jm["images"]) {
      if (static_cast<int>(row.size()) >= count) break;
      row.push_back(read_image_png(dir + "/" + rel.get<std::string>()));
    }
    if (row.empty()) throw DataError("plot: stage " + std::to_string(n) + " has no images");
    rows.push_back(std::move(row));
  }

  const int size = rows[0][0].h, gap = 2;
  size_t cols = 0;
  for (auto& r : rows) cols = std::max(cols, r.size());
  ImageTensor sheet(1, 3, static_cast<int>(rows.size()) * (size + gap) + gap,
                    static_cast<int>(cols) * (size + gap) + gap);
  for (auto& v : sheet.v) v = -1.0f;
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) {
      const ImageTensor& im = rows[r][c];
      int oy = static_cast<int>(r) * (size + gap) + gap;
      int ox = static_cast<int>(c) * (size + gap) + gap;
      for (int ci = 0; ci < 3; ++ci)
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            sheet.at(0, ci, oy + y, ox + x) = im.at(0, ci, y, x);
    }
  write_image_png(sheet, out_path);
  std::cout << json{{"contact_sheet", out_path},
                    {"rows", rows.size()},
                    {"columns", cols}}
                   .dump(2)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diffusion-based label-guided translation for domain-adaptive segmentation"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string data, out, run_dir, dm_path, seg_path, g0_path, split = "target_test";
  std::string arms = "full,no-sgg,no-ptl,no-lcg,no-gsg,baseline", stages = "1,8,16";
  std::string out_path;
  bool force = false, arrangements = false;
  int n = 16, scenes = 5, size = 16, count = 8;
  double subsample = 1.0, threshold = 1e-3;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic two-style benchmark");
  add_common(gen, common);
  gen->add_option("--out", out, "Dataset directory");
  gen->add_flag("--force", force, "Overwrite an existing dataset");

  auto* td = app.add_subcommand("train-diffusion", "Train the noise estimator on target-train");
  add_common(td, common);
  td->add_option("--data", data, "Dataset directory")->required();
  td->add_option("--out", out, "Output directory");

  auto* ts = app.add_subcommand("train-seg", "Pretrain the segmenter on source-train");
  add_common(ts, common);
  ts->add_option("--data", data, "Dataset directory")->required();
  ts->add_option("--out", out, "Output directory");

  auto* tr = app.add_subcommand("translate", "Diffuse-then-denoise the source split");
  add_common(tr, common);
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--dm", dm_path, "Noise-estimator checkpoint")->required();
  tr->add_option("--seg", seg_path, "Segmenter checkpoint (enables guidance)");
  tr->add_option("--n", n, "Diffusion depth");
  tr->add_option("--out", out, "Output directory");
  tr->add_option("--subsample", subsample, "Fraction of the source split to translate");

  auto* pr = app.add_subcommand("ptl-run", "Progressive translation curriculum (resumable)");
  add_common(pr, common);
  pr->add_option("--data", data, "Dataset directory")->required();
  pr->add_option("--dm", dm_path, "Noise-estimator checkpoint")->required();
  pr->add_option("--g0", g0_path, "Pretrained segmenter checkpoint (pretrains when absent)");
  pr->add_option("--run-dir", run_dir, "Run directory");

  auto* ev = app.add_subcommand("evaluate", "Evaluate a segmenter checkpoint on a split");
  add_common(ev, common);
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--seg", seg_path, "Segmenter checkpoint")->required();
  ev->add_option("--split", split, "Split name (source_train | target_test)");
  ev->add_option("--out", out_path, "Metrics JSON output path");

  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of guidance gradients");
  add_common(gc, common);
  gc->add_option("--scenes", scenes, "Number of random scenes");
  gc->add_option("--size", size, "Input side length");
  gc->add_option("--threshold", threshold, "Max relative error allowed");

  auto* ab = app.add_subcommand("ablate", "Component and arrangement ablations");
  add_common(ab, common);
  ab->add_option("--data", data, "Dataset directory")->required();
  ab->add_option("--dm", dm_path, "Noise-estimator checkpoint")->required();
  ab->add_option("--g0", g0_path, "Pretrained segmenter checkpoint (pretrains when absent)");
  ab->add_option("--run-dir", run_dir, "Run directory");
  ab->add_option("--arms", arms, "Comma-separated arm list");
  ab->add_flag("--arrangements", arrangements, "Run the four guidance arrangements instead");

  auto* pl = app.add_subcommand("plot", "Contact sheet of translated stages");
  pl->add_option("--run-dir", run_dir, "PTL run directory")->required();
  pl->add_option("--stages", stages, "Comma-separated stage list");
  pl->add_option("--count", count, "Images per stage row");
  pl->add_option("--out", out_path, "Output PNG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints usage / message
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = resolve_config(common);
    if (gen->parsed()) return cmd_gen_data(cfg, out, force);
    if (td->parsed()) return cmd_train_diffusion(cfg, data, out);
    if (ts->parsed()) return cmd_train_seg(cfg, data, out);
    if (tr->parsed()) return cmd_translate(cfg, data, dm_path, seg_path, n, out, subsample);
    if (pr->parsed()) return cmd_ptl_run(cfg, data, dm_path, g0_path, run_dir);
    if (ev->parsed()) return cmd_evaluate(cfg, data, seg_path, split, out_path);
    if (gc->parsed()) return cmd_grad_check(cfg, scenes, size, threshold);
    if (ab->parsed()) return cmd_ablate(cfg, data, dm_path, g0_path, run_dir, arms, arrangements);
    if (pl->parsed()) return cmd_plot(run_dir, stages, count, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
