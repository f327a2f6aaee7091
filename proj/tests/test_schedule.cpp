#include <doctest.h>

#include <cmath>

#include "dass/schedule.hpp"

using namespace dass;

TEST_CASE("linear schedule endpoints match the configured betas") {
  auto s = make_linear_schedule(1000, 1e-4, 0.02);
  CHECK(s.b(1) == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(s.b(1000) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(s.abar(1) == doctest::Approx(1.0 - 1e-4).epsilon(1e-15));
}

TEST_CASE("schedule identities hold to 1e-12 in double precision") {
  for (int T : {200, 1000}) {
    auto s = make_linear_schedule(T, 1e-4, 0.02);
    for (int t = 1; t <= T; ++t) {
      CHECK(std::fabs(s.a(t) + s.b(t) - 1.0) < 1e-12);
      CHECK(std::fabs(s.abar(t) / s.abar(t - 1) - s.a(t)) < 1e-12);
      CHECK(s.s2(t) == s.b(t));
    }
    for (int t = 2; t <= T; ++t) CHECK(s.abar(t) < s.abar(t - 1));
    for (int t = 2; t <= T; ++t) CHECK(s.b(t) > s.b(t - 1));
  }
}

TEST_CASE("alpha_bar_T matches an independent running product") {
  auto s = make_linear_schedule(1000, 1e-4, 0.02);
  // oracle: exact running product plus a log-sum cross-check
  double prod = 1.0, logsum = 0.0;
  for (int t = 1; t <= 1000; ++t) {
    double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0;
    prod *= 1.0 - beta;
    logsum += std::log(1.0 - beta);
  }
  CHECK(s.abar(1000) == doctest::Approx(prod).epsilon(1e-12));
  CHECK(std::log(s.abar(1000)) == doctest::Approx(logsum).epsilon(1e-9));
}

TEST_CASE("invalid schedule parameters are rejected") {
  CHECK_THROWS_AS(make_linear_schedule(1, 1e-4, 0.02), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(100, 0.02, 1e-4), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(100, 0.0, 0.02), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(100, 1e-4, 1.0), ConfigError);
}

TEST_CASE("fingerprint distinguishes schedules") {
  auto a = make_linear_schedule(200, 1e-4, 0.02);
  auto b = make_linear_schedule(1000, 1e-4, 0.02);
  auto c = make_linear_schedule(200, 1e-4, 0.02);
  CHECK(a.fingerprint() == c.fingerprint());
  CHECK(a.fingerprint() != b.fingerprint());
}
