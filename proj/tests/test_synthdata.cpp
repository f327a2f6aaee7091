#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dass/imageio.hpp"
#include "dass/synthdata.hpp"

using namespace dass;
namespace fs = std::filesystem;

TEST_CASE("scene generation is deterministic") {
  SceneSpec spec;
  spec.seed = 7;
  spec.image_size = 32;
  spec.num_classes = 4;
  auto [img1, lab1] = generate_scene(spec);
  auto [img2, lab2] = generate_scene(spec);
  CHECK(img1.v == img2.v);
  CHECK(lab1 == lab2);
}

TEST_CASE("empty object range gives all-background label") {
  SceneSpec spec;
  spec.seed = 3;
  spec.object_count_range = {0, 0};
  auto [img, lab] = generate_scene(spec);
  for (auto v : lab.v) CHECK(v == 0);
  (void)img;
}

TEST_CASE("styles share geometry: identical labels, different images") {
  SceneSpec spec;
  spec.seed = 7;
  spec.style = Style::Source;
  auto [img_s, lab_s] = generate_scene(spec);
  spec.style = Style::Target;
  auto [img_t, lab_t] = generate_scene(spec);
  // oracle: pixel-wise label comparison across styles with shared seed
  CHECK(lab_s == lab_t);
  CHECK(img_s.v != img_t.v);
}

TEST_CASE("labels cover every pixel with a valid class") {
  for (uint64_t seed : {1u, 22u, 333u}) {
    SceneSpec spec;
    spec.seed = seed;
    auto [img, lab] = generate_scene(spec);
    std::vector<int> counts(spec.num_classes, 0);
    for (auto v : lab.v) {
      CHECK(v < spec.num_classes);
      ++counts[v];
    }
    int total = 0;
    for (int c : counts) total += c;
    CHECK(total == spec.image_size * spec.image_size);
    for (auto v : img.v) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("invalid scene specs are rejected") {
  SceneSpec spec;
  spec.image_size = 8;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
  spec.image_size = 32;
  spec.num_classes = 1;
  CHECK_THROWS_AS(generate_scene(spec), ConfigError);
}

TEST_CASE("dataset generation: counts, split contract, determinism") {
  fs::path tmp = fs::temp_directory_path() / "dass_data_test";
  fs::remove_all(tmp);

  DatasetConfig cfg;
  cfg.out_dir = tmp.string();
  cfg.num_source = 6;
  cfg.num_target_train = 5;
  cfg.num_target_test = 4;
  cfg.master_seed = 99;
  auto manifests = generate_dataset(cfg);
  REQUIRE(manifests.size() == 3);
  CHECK(manifests[0].entries.size() == 6);
  CHECK(manifests[1].entries.size() == 5);
  CHECK(manifests[2].entries.size() == 4);

  // split contract: target-train has no labels, the others do
  for (auto& e : manifests[0].entries) CHECK(e.label_path.has_value());
  for (auto& e : manifests[1].entries) CHECK(!e.label_path.has_value());
  for (auto& e : manifests[2].entries) CHECK(e.label_path.has_value());

  // refusal on non-empty dir without force
  CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);

  // determinism: regenerate with force and compare one image byte-wise
  auto read_bytes = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  };
  std::string before = read_bytes(tmp / "images" / "src_0000.png");
  cfg.force = true;
  generate_dataset(cfg);
  CHECK(read_bytes(tmp / "images" / "src_0000.png") == before);

  // manifest round-trip
  auto m = DatasetManifest::load((tmp / "target_test.json").string());
  CHECK(m.split == Split::TargetTest);
  CHECK(m.entries.size() == 4);

  // png round-trip quantization: reading back matches the quantized value
  ImageTensor img = read_image_png((tmp / manifests[0].entries[0].image_path).string());
  CHECK(img.h == 32);
  ImageTensor img2 = read_image_png((tmp / manifests[0].entries[0].image_path).string());
  CHECK(img.v == img2.v);

  fs::remove_all(tmp);
}

TEST_CASE("augment: disabled fraction is the identity") {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  SceneSpec spec;
  spec.seed = 5;
  auto [img, lab] = generate_scene(spec);
  RngStream rng(1);
  AugmentConfig cfg{0.0, 0};
  for (int i = 0; i < 10; ++i) CHECK(augment(img, lab, s, rng, cfg).v == img.v);
}

TEST_CASE("augment: full mask of a single-class label is the identity") {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  SceneSpec spec;
  spec.seed = 5;
  spec.object_count_range = {0, 0};
  auto [img, lab] = generate_scene(spec);
  AugmentConfig cfg{1.0, 0};
  RngStream rng(2);
  // whenever the mask path is taken, the only class covers all pixels
  int mask_hits = 0;
  for (int i = 0; i < 30; ++i) {
    RngStream probe = rng.split(i);
    RngStream probe2 = probe;
    probe2.uniform();  // the accept draw
    bool is_mask = probe2.uniform_int(0, 2) == 1;
    ImageTensor out = augment(img, lab, s, probe, cfg);
    if (is_mask) {
      ++mask_hits;
      CHECK(out.v == img.v);
    }
  }
  CHECK(mask_hits > 0);
}

TEST_CASE("augment: noise mode statistics match the closed form") {
  // oracle: Monte Carlo mean/variance of the noised image at fixed t
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  ImageTensor img(1, 3, 16, 16);
  for (auto& v : img.v) v = 0.6f;
  LabelMap lab(16, 16);

  // drive q_sample through augment with fraction 1; collect only noise-mode
  // outputs at one t by drawing from a controlled stream
  AugmentConfig cfg{1.0, 50};
  RngStream rng(77);
  double sum = 0, sum2 = 0;
  int count = 0;
  for (int i = 0; i < 4000; ++i) {
    RngStream probe = rng.split(i);
    RngStream peek = probe;
    peek.uniform();
    if (peek.uniform_int(0, 2) != 0) continue;  // want pure-noise mode
    int t = static_cast<int>(peek.uniform_int(1, 50));
    if (t != 25) continue;
    ImageTensor out = augment(img, lab, s, probe, cfg);
    for (auto v : out.v) {
      sum += v;
      sum2 += static_cast<double>(v) * v;
    }
    count += static_cast<int>(out.size());
  }
  REQUIRE(count > 10000);
  double mean = sum / count;
  double var = sum2 / count - mean * mean;
  CHECK(mean == doctest::Approx(std::sqrt(s.abar(25)) * 0.6).epsilon(0.02));
  CHECK(var == doctest::Approx(1.0 - s.abar(25)).epsilon(0.05));
}
