#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "dass/losses.hpp"
#include "dass/models.hpp"

using namespace dass;

namespace {

UNetConfig tiny_unet() {
  UNetConfig c;
  c.base = 4;
  c.temb_dim = 8;
  c.temb_hidden = 8;
  return c;
}

SegNetConfig tiny_seg() {
  SegNetConfig c;
  c.base = 4;
  c.num_classes = 4;
  return c;
}

}  // namespace

TEST_CASE("noise estimator shape contract and determinism") {
  ModelHandle h = ModelHandle::make_noise_estimator(tiny_unet(), 1);
  RngStream rng(2);
  ImageTensor x(2, 3, 32, 32);
  rng.fill_normal(x);
  ImageTensor a = h.apply(x, {1, 200});
  CHECK(a.n == 2);
  CHECK(a.c == 3);
  CHECK(a.h == 32);
  CHECK(a.w == 32);
  ImageTensor b = h.apply(x, {1, 200});
  CHECK(a.v == b.v);
  CHECK_THROWS_AS(h.apply(x, {0, 5}), ContractError);
  CHECK_THROWS_AS(h.apply(x, {1}), ContractError);  // t length mismatch
  CHECK_THROWS_AS(h.apply(x), ContractError);       // wrong kind
}

TEST_CASE("segmenter shape contract and softmax normalization") {
  ModelHandle h = ModelHandle::make_segmenter(tiny_seg(), 3);
  RngStream rng(4);
  ImageTensor x(1, 3, 32, 32);
  rng.fill_normal(x);
  ImageTensor logits = h.apply(x);
  CHECK(logits.c == 4);
  CHECK(logits.h == 32);
  // softmax over channels sums to 1 at every pixel
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx) {
      double z = 0, mx = -1e30;
      for (int c = 0; c < 4; ++c) mx = std::max(mx, (double)logits.at(0, c, y, xx));
      for (int c = 0; c < 4; ++c) z += std::exp(logits.at(0, c, y, xx) - mx);
      double sum = 0;
      for (int c = 0; c < 4; ++c) sum += std::exp(logits.at(0, c, y, xx) - mx) / z;
      CHECK(sum == doctest::Approx(1.0));
    }
  CHECK_THROWS_AS(h.apply(x, {1}), ContractError);
}

TEST_CASE("segmenter overfits a single image") {
  SegNetConfig cfg = tiny_seg();
  cfg.base = 8;
  ModelHandle h = ModelHandle::make_segmenter(cfg, 5);
  RngStream rng(6);
  ImageTensor x(1, 3, 16, 16);
  rng.fill_normal(x);
  LabelMap y(16, 16);
  for (int yy = 0; yy < 16; ++yy)
    for (int xx = 0; xx < 16; ++xx) y.at(yy, xx) = static_cast<uint8_t>((yy < 8) * 2 + (xx < 8));

  auto params = h.params();
  nn::Adam<float> opt;
  opt.lr = 3e-3;
  std::vector<LabelMap> labels{y};
  for (int it = 0; it < 300; ++it) {
    ImageTensor logits = h.seg->forward(x);
    auto [loss, glogits] = softmax_ce_loss(logits, labels);
    (void)loss;
    h.seg->backward(glogits);
    opt.step(params);
    nn::zero_grads(params);
  }
  ImageTensor logits = h.apply(x);
  int correct = 0;
  for (int yy = 0; yy < 16; ++yy)
    for (int xx = 0; xx < 16; ++xx) {
      int best = 0;
      for (int c = 1; c < 4; ++c)
        if (logits.at(0, c, yy, xx) > logits.at(0, best, yy, xx)) best = c;
      correct += best == y.at(yy, xx);
    }
  CHECK(static_cast<double>(correct) / 256 > 0.99);
}

TEST_CASE("input_gradient trivial cases") {
  ModelHandle h = ModelHandle::make_segmenter(tiny_seg(), 7);
  RngStream rng(8);
  ImageTensor x(1, 3, 8, 8);
  rng.fill_normal(x);

  // constant loss -> zero gradient
  ImageTensor g = input_gradient(h, x, [](const ImageTensor& out) {
    return std::make_pair(1.0, ImageTensor::zeros_like(out));
  });
  for (auto v : g.v) CHECK(v == 0.0f);

  // parameters untouched and grads left clean
  auto ps = h.params();
  for (auto& p : ps)
    for (auto v : *p.g) CHECK(v == 0.0f);
}

TEST_CASE("checkpoint round-trip reproduces outputs bit-identically") {
  namespace fs = std::filesystem;
  fs::path tmp = fs::temp_directory_path() / "dass_ckpt_test";
  fs::create_directories(tmp);

  ModelHandle h = ModelHandle::make_noise_estimator(tiny_unet(), 9);
  h.schedule_fp = 0xabcdefull;
  std::string path = (tmp / "noise.ckpt").string();
  save_checkpoint(h, path);
  ModelHandle h2 = load_checkpoint(path);
  CHECK(h2.kind == ModelKind::NoiseEstimator);
  CHECK(h2.schedule_fp == 0xabcdefull);
  CHECK(h2.ucfg.base == h.ucfg.base);

  RngStream rng(10);
  ImageTensor x(1, 3, 16, 16);
  rng.fill_normal(x);
  CHECK(h.apply(x, {33}).v == h2.apply(x, {33}).v);

  ModelHandle s = ModelHandle::make_segmenter(tiny_seg(), 11);
  s.stage = 5;
  std::string spath = (tmp / "seg.ckpt").string();
  save_checkpoint(s, spath);
  ModelHandle s2 = load_checkpoint(spath);
  CHECK(s2.stage == 5);
  CHECK(s.apply(x).v == s2.apply(x).v);

  fs::remove_all(tmp);
}

TEST_CASE("corrupted checkpoint is rejected") {
  namespace fs = std::filesystem;
  fs::path tmp = fs::temp_directory_path() / "dass_ckpt_bad";
  fs::create_directories(tmp);
  std::string path = (tmp / "bad.ckpt").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  fs::remove_all(tmp);
}
