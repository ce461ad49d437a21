#pragma once

// Counter-based seeding and random band-limited test data.

#include <cmath>
#include <cstdint>
#include <random>

#include "frlab/density.hpp"
#include "frlab/grid.hpp"

namespace frlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for trial `index` under `master_seed`; adding trials
/// never changes the streams of earlier ones.
inline std::mt19937_64 trial_stream(std::uint64_t master_seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(master_seed) ^ splitmix64(index + 1)));
}

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Random trigonometric polynomial with wavenumbers 1..max_mode per axis
/// (no constant term), rescaled to sup-norm `amplitude`.
inline Field random_band_limited(const Grid& g, Rng& rng, int max_mode, double amplitude) {
  Field f = Field::Zero(static_cast<Eigen::Index>(g.num_nodes()));
  if (g.dims() == 1) {
    for (int k = 1; k <= max_mode; ++k) {
      const double a = normal(rng) / k, b = normal(rng) / k;
      f += g.sample([&](const Point& p) { return a * std::cos(k * p[0]) + b * std::sin(k * p[0]); });
    }
  } else {
    for (int kx = -max_mode; kx <= max_mode; ++kx) {
      for (int ky = 0; ky <= max_mode; ++ky) {
        if (ky == 0 && kx <= 0) continue;
        const double decay = 1.0 / (1.0 + std::hypot(kx, ky));
        const double a = normal(rng) * decay, b = normal(rng) * decay;
        f += g.sample([&](const Point& p) {
          const double ph = kx * p[0] + ky * p[1];
          return a * std::cos(ph) + b * std::sin(ph);
        });
      }
    }
  }
  const double sup = f.cwiseAbs().maxCoeff();
  if (sup > 0.0) f *= amplitude / sup;
  return f;
}

/// Random smooth positive density with coefficient (1 + q) * scale / vol,
/// |q| <= 0.6.
inline Density random_density(const Grid& g, Rng& rng, int max_mode = 3, bool probability = true) {
  Field q = random_band_limited(g, rng, max_mode, uniform(rng, 0.1, 0.6));
  const double scale_factor = probability ? 1.0 : uniform(rng, 0.5, 3.0);
  Field coeff = (Field::Ones(q.size()) + q) * (scale_factor / g.volume());
  return Density(g, std::move(coeff));
}

/// Random band-limited tangent; with `prob_tangent` it integrates to zero,
/// otherwise it carries a random mean as well.
inline TangentDensity random_tangent(const Grid& g, Rng& rng, int max_mode = 3,
                                     bool prob_tangent = true) {
  Field a = random_band_limited(g, rng, max_mode, 1.0 / g.volume());
  if (!prob_tangent) a.array() += uniform(rng, -1.0, 1.0) / g.volume();
  return TangentDensity(g, std::move(a), prob_tangent);
}

}  // namespace frlab
