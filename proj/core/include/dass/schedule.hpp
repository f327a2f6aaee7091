#pragma once

#include <cstdint>
#include <vector>

#include "dass/errors.hpp"

namespace dass {

// Noise schedule tables, 1-indexed through t (index 0 unused except
// alpha_bar(0) == 1). Tables are double precision and immutable after
// construction.
struct NoiseSchedule {
  int T = 0;
  double beta1 = 0, betaT = 0;
  std::vector<double> beta;        // beta[t], t = 1..T
  std::vector<double> alpha;       // 1 - beta[t]
  std::vector<double> alpha_bar;   // prod_{s<=t} alpha[s]; alpha_bar[0] == 1
  std::vector<double> sigma2;      // reverse-step variance, fixed to beta[t]

  double b(int t) const { return beta[t]; }
  double a(int t) const { return alpha[t]; }
  double abar(int t) const { return alpha_bar[t]; }
  double s2(int t) const { return sigma2[t]; }
  bool valid_t(int t) const { return t >= 1 && t <= T; }

  // Identifies the schedule inside checkpoints.
  uint64_t fingerprint() const;
};

// Linear beta schedule: beta_t = beta1 + (t-1) * (betaT-beta1) / (T-1).
NoiseSchedule make_linear_schedule(int T, double beta1, double betaT);

}  // namespace dass
