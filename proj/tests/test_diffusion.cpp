#include <doctest.h>

#include <cmath>

#include "dass/diffusion.hpp"

using namespace dass;

namespace {

ImageTensor constant_image(int h, int w, float value) {
  ImageTensor img(1, 3, h, w);
  for (auto& v : img.v) v = value;
  return img;
}

}  // namespace

TEST_CASE("q_sample zero-noise and linearity limits") {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  ImageTensor x0 = constant_image(4, 4, 0.5f);
  ImageTensor zero = ImageTensor::zeros_like(x0);
  ImageTensor ones = constant_image(4, 4, 1.0f);

  ImageTensor xt = q_sample(x0, 50, zero, s);
  float expect = 0.5f * static_cast<float>(std::sqrt(s.abar(50)));
  for (auto v : xt.v) CHECK(v == doctest::Approx(expect));

  xt = q_sample(zero, 50, ones, s);
  expect = static_cast<float>(std::sqrt(1.0 - s.abar(50)));
  for (auto v : xt.v) CHECK(v == doctest::Approx(expect));

  CHECK_THROWS_AS(q_sample(x0, 0, zero, s), ContractError);
  CHECK_THROWS_AS(q_sample(x0, 201, zero, s), ContractError);
}

TEST_CASE("q_step limits") {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  ImageTensor x = constant_image(4, 4, 0.8f);
  ImageTensor zero = ImageTensor::zeros_like(x);
  ImageTensor xt = q_step(x, 1, zero, s);
  for (auto v : xt.v) CHECK(v == doctest::Approx(0.8f * std::sqrt(1.0 - s.b(1))));
  // beta_1 = 1e-4 is nearly the no-noise limit
  for (auto v : xt.v) CHECK(v == doctest::Approx(0.8f).epsilon(1e-4));
}

TEST_CASE("closed-form diffusion matches iterated single steps in distribution") {
  // oracle: Monte Carlo comparison of Eq.-2-style sampling vs a chain of
  // single steps, per-pixel mean within 2% (absolute, values are O(1))
  // and variance within 5%
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  ImageTensor x0(1, 1, 2, 2);
  x0.v = {0.9f, -0.7f, 0.3f, -0.1f};
  const int t = 30, draws = 2000;
  RngStream rng(99);

  std::vector<double> mean_a(4, 0), var_a(4, 0), mean_b(4, 0), var_b(4, 0);
  for (int d = 0; d < draws; ++d) {
    ImageTensor eps = rng.normal_like(x0);
    ImageTensor xa = q_sample(x0, t, eps, s);
    ImageTensor xb = x0;
    for (int k = 1; k <= t; ++k) xb = q_step(xb, k, rng.normal_like(x0), s);
    for (int i = 0; i < 4; ++i) {
      mean_a[i] += xa.v[i];
      var_a[i] += xa.v[i] * xa.v[i];
      mean_b[i] += xb.v[i];
      var_b[i] += xb.v[i] * xb.v[i];
    }
  }
  for (int i = 0; i < 4; ++i) {
    mean_a[i] /= draws;
    mean_b[i] /= draws;
    var_a[i] = var_a[i] / draws - mean_a[i] * mean_a[i];
    var_b[i] = var_b[i] / draws - mean_b[i] * mean_b[i];
    double exp_mean = std::sqrt(s.abar(t)) * x0.v[i];
    double exp_var = 1.0 - s.abar(t);
    CHECK(std::fabs(mean_a[i] - exp_mean) < 0.05);
    CHECK(std::fabs(mean_b[i] - exp_mean) < 0.05);
    CHECK(std::fabs(var_a[i] - exp_var) / exp_var < 0.15);
    CHECK(std::fabs(var_b[i] - exp_var) / exp_var < 0.15);
  }
}

TEST_CASE("posterior_mean algebra") {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  RngStream rng(4);
  ImageTensor xt(1, 3, 4, 4);
  rng.fill_normal(xt);
  ImageTensor zero = ImageTensor::zeros_like(xt);

  ImageTensor mu = posterior_mean(xt, 17, zero, s);
  for (size_t i = 0; i < mu.size(); ++i)
    CHECK(mu.v[i] == doctest::Approx(xt.v[i] / std::sqrt(1.0 - s.b(17))));

  // oracle: numeric substitution of random eps into the closed form
  ImageTensor eps = rng.normal_like(xt);
  ImageTensor mu2 = posterior_mean(xt, 17, eps, s);
  for (size_t i = 0; i < mu2.size(); ++i) {
    double expect = (xt.v[i] - s.b(17) / std::sqrt(1.0 - s.abar(17)) * eps.v[i]) /
                    std::sqrt(1.0 - s.b(17));
    CHECK(mu2.v[i] == doctest::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("reverse_step noise statistics and determinism") {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  ImageTensor mu = constant_image(2, 2, 0.1f);
  ImageTensor xt = constant_image(2, 2, 0.0f);

  // t = 1 adds no noise
  RngStream r1(1);
  ImageTensor out = reverse_step(xt, 1, mu, s, r1);
  for (size_t i = 0; i < out.size(); ++i) CHECK(out.v[i] == mu.v[i]);

  // same state -> identical samples
  RngStream a(7), b(7);
  ImageTensor oa = reverse_step(xt, 50, mu, s, a);
  ImageTensor ob = reverse_step(xt, 50, mu, s, b);
  CHECK(oa.v == ob.v);

  // empirical std of (x_{t-1} - mu) ~ sqrt(beta_t)
  RngStream r(3);
  double sum2 = 0;
  const int draws = 3000;
  for (int d = 0; d < draws; ++d) {
    ImageTensor o = reverse_step(xt, 120, mu, s, r);
    for (size_t i = 0; i < o.size(); ++i) {
      double z = o.v[i] - mu.v[i];
      sum2 += z * z;
    }
  }
  double std_emp = std::sqrt(sum2 / (draws * mu.size()));
  CHECK(std_emp == doctest::Approx(std::sqrt(s.b(120))).epsilon(0.02));
}

TEST_CASE("ddpm_loss trivial identities") {
  auto s = make_linear_schedule(200, 1e-4, 0.02);
  UNetConfig cfg;
  cfg.base = 4;
  cfg.temb_dim = 8;
  cfg.temb_hidden = 8;
  ModelHandle h = ModelHandle::make_noise_estimator(cfg, 1);

  RngStream rng(8);
  ImageTensor x0(2, 3, 8, 8);
  rng.fill_normal(x0);
  x0.clip(-1, 1);
  ImageTensor eps = rng.normal_like(x0);

  // zero-initialized output conv predicts zero noise -> loss == mean(eps^2)
  double loss = ddpm_loss(h, x0, {10, 150}, eps, s);
  double expect = 0;
  for (auto v : eps.v) expect += static_cast<double>(v) * v;
  expect /= static_cast<double>(eps.size());
  CHECK(loss == doctest::Approx(expect).epsilon(1e-5));
  CHECK(loss == doctest::Approx(1.0).epsilon(0.25));  // ~Var(eps)
}

TEST_CASE("train_diffusion with zero iterations returns the initialization") {
  auto s = make_linear_schedule(50, 1e-4, 0.02);
  UNetConfig cfg;
  cfg.base = 4;
  cfg.temb_dim = 8;
  cfg.temb_hidden = 8;
  std::vector<ImageTensor> imgs(3, ImageTensor(1, 3, 8, 8));
  DiffusionTrainConfig tc;
  tc.iterations = 0;
  tc.seed = 42;
  ModelHandle h = train_diffusion_images(imgs, s, cfg, tc);
  ModelHandle ref = ModelHandle::make_noise_estimator(cfg, 42);
  auto pa = h.params(), pb = ref.params();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].w == *pb[i].w);
}
