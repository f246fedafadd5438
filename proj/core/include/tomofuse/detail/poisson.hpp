#pragma once

#include <cmath>
#include <random>

namespace tomofuse {

template <typename Rng>
std::int64_t sample_poisson(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  if (mean < 30.0) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    double p = std::exp(-mean);
    double cdf = p;
    std::int64_t k = 0;
    while (u > cdf && k < 1000) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double v = std::round(mean + std::sqrt(mean) * normal(rng));
  return v < 0.0 ? 0 : static_cast<std::int64_t>(v);
}

}  // namespace tomofuse
