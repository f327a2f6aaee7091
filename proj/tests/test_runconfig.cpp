#include <doctest.h>

#include <filesystem>

#include "dass/runconfig.hpp"

using namespace dass;

TEST_CASE("defaults survive an empty config") {
  RunConfig cfg = RunConfig::from_json_text("{}");
  CHECK(cfg.T == 200);
  CHECK(cfg.beta1 == doctest::Approx(1e-4));
  CHECK(cfg.betaT == doctest::Approx(0.02));
  CHECK(cfg.ptl.N == 16);
  CHECK(cfg.guidance.lambda == doctest::Approx(80.0));
  CHECK(cfg.guidance.arrangement == Arrangement::Alternate);
}

TEST_CASE("round-trip through json text is lossless") {
  RunConfig cfg;
  cfg.T = 100;
  cfg.seed = 1234;
  cfg.ptl.N = 4;
  cfg.ptl.guidance = GuidanceMode::LcgOnly;
  cfg.guidance.lambda = 10;
  cfg.guidance.arrangement = Arrangement::RandomMix;
  cfg.guidance.sign_mode = SignMode::PaperLiteral;
  cfg.dataset.num_source = 11;
  cfg.unet.base = 8;
  cfg.diffusion_train.iterations = 7;
  RunConfig back = RunConfig::from_json_text(cfg.to_json_text());
  CHECK(back.T == 100);
  CHECK(back.seed == 1234);
  CHECK(back.ptl.N == 4);
  CHECK(back.ptl.guidance == GuidanceMode::LcgOnly);
  CHECK(back.guidance.lambda == doctest::Approx(10.0));
  CHECK(back.guidance.arrangement == Arrangement::RandomMix);
  CHECK(back.guidance.sign_mode == SignMode::PaperLiteral);
  CHECK(back.dataset.num_source == 11);
  CHECK(back.unet.base == 8);
  CHECK(back.diffusion_train.iterations == 7);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"ptl": {"bogus": 1}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"guidance": {"lam": 3}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"dataset": {"nsrc": 3}})"), ConfigError);
}

TEST_CASE("bad enum names and malformed json are rejected") {
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"guidance": {"arrangement": "zigzag"}})"),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"ptl": {"guidance": "half"}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text("{"), ConfigError);
}

TEST_CASE("save and load through a file") {
  namespace fs = std::filesystem;
  fs::path tmp = fs::temp_directory_path() / "dass_runconfig_test";
  fs::create_directories(tmp);
  std::string path = (tmp / "config.json").string();

  RunConfig cfg;
  cfg.seed = 42;
  cfg.output_root = "elsewhere";
  cfg.save(path);
  RunConfig back = RunConfig::from_json_file(path);
  CHECK(back.seed == 42);
  CHECK(back.output_root == "elsewhere");

  CHECK_THROWS_AS(RunConfig::from_json_file((tmp / "missing.json").string()), IoError);
  fs::remove_all(tmp);
}
