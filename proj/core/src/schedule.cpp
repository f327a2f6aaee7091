#include "dass/schedule.hpp"

#include <cstring>

#include "dass/rng.hpp"

namespace dass {

NoiseSchedule make_linear_schedule(int T, double beta1, double betaT) {
  if (T < 2) throw ConfigError("schedule: T must be >= 2");
  if (!(beta1 > 0.0 && beta1 < betaT && betaT < 1.0))
    throw ConfigError("schedule: need 0 < beta1 < betaT < 1");

  NoiseSchedule s;
  s.T = T;
  s.beta1 = beta1;
  s.betaT = betaT;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 0.0);
  s.alpha_bar.assign(T + 1, 0.0);
  s.sigma2.assign(T + 1, 0.0);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = beta1 + (betaT - beta1) * (t - 1) / (T - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.sigma2[t] = s.beta[t];
  }
  return s;
}

uint64_t NoiseSchedule::fingerprint() const {
  uint64_t h = RngStream::mix64(static_cast<uint64_t>(T));
  uint64_t bits;
  std::memcpy(&bits, &beta1, 8);
  h = RngStream::mix64(h ^ bits);
  std::memcpy(&bits, &betaT, 8);
  h = RngStream::mix64(h ^ bits);
  return h;
}

}  // namespace dass
