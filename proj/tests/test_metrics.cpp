#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "frlab/invariance.hpp"
#include "frlab/metrics.hpp"
#include "frlab/random.hpp"

using namespace frlab;

namespace {

double sup(const Field& f) { return f.cwiseAbs().maxCoeff(); }

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

TangentDensity cos_mode(const Grid& g, int k, double amp = 1.0) {
  return tangent_from_function(g, [=](const Point& p) { return amp * std::cos(k * p[0]); }, true);
}

}  // namespace

TEST(FisherRao, Examples) {
  const Grid c = make_circle(64);
  const Density u = uniform_density(c);
  const TangentDensity a = cos_mode(c, 1, 1.0 / two_pi);
  EXPECT_NEAR(fisher_rao(u, a, a), 0.5, 1e-12);
  const TangentDensity z(c, Field::Zero(64));
  EXPECT_EQ(fisher_rao(u, z, a), 0.0);
  const double base = fisher_rao(u, a, a);
  EXPECT_NEAR(fisher_rao(scale(u, 3.0), a, a), base / 3.0, 1e-14);
  EXPECT_THROW(fisher_rao(u, a, cos_mode(make_circle(32), 1)), InvalidArgument);
}

TEST(TwoParamFamily, Examples) {
  Rng rng(1);
  const Grid c = make_circle(32);
  const Density mu = random_density(c, rng);
  const TangentDensity a = random_tangent(c, rng, 3, false), b = random_tangent(c, rng, 3, false);
  EXPECT_EQ(two_param_family(1, 0)(mu, a, b), fisher_rao(mu, a, b));
  const TangentDensity pa = random_tangent(c, rng), pb = random_tangent(c, rng);
  EXPECT_NEAR(two_param_family(0, 1)(mu, pa, pb), 0.0, 1e-26);
  const Density u = uniform_density(c);
  EXPECT_NEAR(two_param_family(2, 3)(u, as_tangent(u), as_tangent(u)), 5.0, 1e-13);
}

TEST(ExtendMetric, Examples) {
  Rng rng(2);
  const Grid c = make_circle(64);
  const Density mu = random_density(c, rng);
  const TangentDensity a = random_tangent(c, rng), b = random_tangent(c, rng);
  const MetricForm ext = extended_form(fisher_rao_form());
  EXPECT_NEAR(ext(mu, a, b), fisher_rao(mu, a, b), 1e-12 * std::abs(fisher_rao(mu, a, b)));
  EXPECT_NEAR(ext(mu, as_tangent(mu), as_tangent(mu)), 0.0, 1e-24);
  EXPECT_NEAR(ext(mu, as_tangent(mu), b), 0.0, 1e-14);
}

TEST(ExtendMetric, ScalingEquivariance) {
  // the extension depends on mu only through mu/mu(M) and kills the radial direction
  Rng rng(3);
  const Grid t = make_torus(16, 16);
  const Density mu = random_density(t, rng, 3, false);
  const TangentDensity a = random_tangent(t, rng, 3, false), b = random_tangent(t, rng, 3, false);
  const MetricForm ext = extended_form(fisher_rao_form());
  EXPECT_NEAR(ext(scale(mu, 4.0), a, b), ext(mu, a, b), 1e-12 * std::abs(ext(mu, a, b)));
  const TangentDensity shifted(t, a.coeff() + 2.5 * mu.coeff());
  EXPECT_NEAR(ext(mu, shifted, b), ext(mu, a, b), 1e-11 * std::abs(ext(mu, a, b)));
}

TEST(ExtendMetric, InvariantOnDensities) {
  const MetricForm ext = extended_form(fisher_rao_form());
  const auto d = invariance_trials(ext, make_circle(256), 10, 99, {false, 3});
  EXPECT_LE(max_of(d), 1e-8);
}

TEST(PhiMap, Examples) {
  const Grid c = make_circle(32);
  EXPECT_EQ(phi_map(Density(c, Field::Ones(32))).gtilde(), Field::Ones(32));
  const Density mu = density_from_function(c, [](const Point& p) { return 1.0 + 0.5 * std::sin(p[0]); });
  const Field expect = c.sample([](const Point& p) { return std::pow(1.0 + 0.5 * std::sin(p[0]), 2); });
  EXPECT_LE(sup(phi_map(mu).gtilde() - expect), 1e-15);
}

TEST(PhiMap, Equivariant) {
  Rng rng(4);
  const Grid c = make_circle(256);
  for (int i = 0; i < 10; ++i) {
    const Density mu = random_density(c, rng);
    const Diffeo phi = random_circle_diffeo(c, rng);
    const Field lhs = phi_map(pullback_density(phi, mu)).gtilde();
    const Field rhs = pullback_metric(phi, phi_map(mu)).gtilde();
    EXPECT_LE(sup(lhs - rhs), 1e-8 * sup(rhs));
  }
  EXPECT_THROW(CircleMetricTensor(c, Field::Zero(256)), InvalidArgument);
}

TEST(LaplacianCircle, Examples) {
  const Grid c = make_circle(32);
  const Field cosine = c.sample([](const Point& p) { return std::cos(p[0]); });
  const CircleMetricTensor flat(c, Field::Ones(32));
  EXPECT_LE(sup(laplacian_circle(flat, cosine) - cosine), 1e-12);
  EXPECT_LE(sup(laplacian_circle(flat, Field::Constant(32, 2.0))), 1e-13);
  const CircleMetricTensor four(c, Field::Constant(32, 4.0));
  EXPECT_LE(sup(laplacian_circle(four, cosine) - 0.25 * cosine), 1e-12);
}

TEST(SobolevMetMetric, Examples) {
  Rng rng(5);
  const Grid c = make_circle(64);
  const Field h = random_band_limited(c, rng, 4, 1.0), k = random_band_limited(c, rng, 4, 1.0);
  const CircleMetricTensor flat(c, Field::Ones(64));
  EXPECT_NEAR(sobolev_met_metric(0, flat, h, k), integrate(c, h.cwiseProduct(k)), 1e-14);
  const CircleMetricTensor g = phi_map(random_density(c, rng));
  for (int n = 0; n <= 3; ++n) {
    const double hk = sobolev_met_metric(n, g, h, k), kh = sobolev_met_metric(n, g, k, h);
    EXPECT_LE(std::abs(hk - kh), 1e-10 * std::max(1.0, std::abs(hk))) << "n=" << n;
  }
  EXPECT_THROW(sobolev_operator(g, h, -1), InvalidArgument);
}

TEST(SobolevMetMetric, InvariantUnderDiffeos) {
  Rng rng(6);
  const Grid c = make_circle(256);
  for (int n = 1; n <= 2; ++n) {
    for (int i = 0; i < 5; ++i) {
      const CircleMetricTensor g = phi_map(random_density(c, rng));
      const Field h = random_band_limited(c, rng, 3, 1.0), k = random_band_limited(c, rng, 3, 1.0);
      const Diffeo phi = random_circle_diffeo(c, rng);
      const double before = sobolev_met_metric(n, g, h, k);
      const double after = sobolev_met_metric(n, pullback_metric(phi, g), pullback_quadratic(phi, h), pullback_quadratic(phi, k));
      EXPECT_LE(std::abs(after - before) / std::abs(before), 1e-6) << "n=" << n;
    }
  }
}

TEST(SobolevDensMetric, Examples) {
  Rng rng(7);
  const Grid c = make_circle(128);
  const Density mu = random_density(c, rng);
  const TangentDensity a = random_tangent(c, rng), b = random_tangent(c, rng);
  EXPECT_NEAR(sobolev_dens_metric(0, mu, a, b), 4.0 * fisher_rao(mu, a, b), 1e-12 * std::abs(fisher_rao(mu, a, b)));

  // mode-k tangents at uniform mu: Phi(mu) = dtheta^2/(2pi)^2, so the
  // Laplacian has eigenvalue (2pi k)^2
  const Density u = uniform_density(c);
  const TangentDensity m1 = cos_mode(c, 1), m2 = cos_mode(c, 2);
  const double r1 = sobolev_dens_metric(2, u, m1, m1) / (4 * fisher_rao(u, m1, m1));
  const double r2 = sobolev_dens_metric(2, u, m2, m2) / (4 * fisher_rao(u, m2, m2));
  EXPECT_NEAR(r1 / std::pow(1.0 + two_pi * two_pi, 2), 1.0, 1e-10);
  EXPECT_NEAR(r2 / std::pow(1.0 + 4.0 * two_pi * two_pi, 2), 1.0, 1e-10);
  EXPECT_GT(std::abs(r2 - r1) / r1, 0.1);

  for (int n = 0; n <= 2; ++n) {
    const double lhs = sobolev_dens_metric(n, mu, a, b);
    const double rhs = sobolev_met_metric(n, phi_map(mu), phi_tangent(mu, a), phi_tangent(mu, b));
    EXPECT_LE(std::abs(lhs - rhs), 1e-8 * std::abs(lhs)) << "n=" << n;
  }
  EXPECT_THROW(sobolev_dens_metric(1, uniform_density(make_torus(8, 8)), TangentDensity(make_torus(8, 8), Field::Zero(64)),
                                   TangentDensity(make_torus(8, 8), Field::Zero(64))),
               InvalidArgument);
}

TEST(H1DotDiffMetric, Examples) {
  const Grid c = make_circle(64);
  const Density u = uniform_density(c);
  const VectorField X{c, {c.sample([](const Point& p) { return std::cos(p[0]); })}};
  EXPECT_NEAR(h1dot_diff_metric(X, X, u), 0.25, 1e-12);
  EXPECT_NEAR(h1dot_diff_metric(constant_field(c, 0), X, u), 0.0, 1e-15);
  Rng rng(8);
  const Density mu0 = random_density(c, rng);
  const VectorField Y{c, {random_band_limited(c, rng, 3, 1.0)}}, Z{c, {random_band_limited(c, rng, 3, 1.0)}};
  EXPECT_NEAR(h1dot_diff_metric(Y, Z, mu0), h1dot_diff_metric(Z, Y, mu0), 1e-15);
  const VectorField W{c, {2.0 * Y[0] - Z[0]}};
  EXPECT_NEAR(h1dot_diff_metric(W, X, mu0), 2.0 * h1dot_diff_metric(Y, X, mu0) - h1dot_diff_metric(Z, X, mu0), 1e-13);
}

TEST(Descent, ExamplesAndConstantRatio) {
  const Grid c = make_circle(128);
  const Density u = uniform_density(c);
  const TangentDensity z(c, Field::Zero(128), true);
  EXPECT_EQ(descend_h1_to_prob(u, z, z), 0.0);
  EXPECT_THROW(descend_h1_to_prob(u, TangentDensity(c, Field::Ones(128)), z), InvalidArgument);

  Rng rng(9);
  std::vector<double> ratios;
  for (int i = 0; i < 20; ++i) {
    const TangentDensity a = random_tangent(c, rng), b = random_tangent(c, rng);
    ratios.push_back(descend_h1_to_prob(u, a, b) / fisher_rao(u, a, b));
    EXPECT_NEAR(descend_h1_to_prob(u, a, b), descend_h1_to_prob(u, b, a), 1e-15);
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  EXPECT_LE(*hi - *lo, 1e-8);
  EXPECT_NEAR(ratios[0], 0.5, 1e-12);
}

TEST(Descent, IndependentOfVerticalRepresentative) {
  Rng rng(10);
  const Grid c = make_circle(64);
  const Density u = uniform_density(c);
  const TangentDensity a = random_tangent(c, rng), b = random_tangent(c, rng);
  const double base = h1dot_diff_metric(horizontal_lift(u, a), horizontal_lift(u, b), u);
  EXPECT_NEAR(h1dot_diff_metric(horizontal_lift(u, a, 0.7), horizontal_lift(u, b, -1.3), u), base, 1e-14);
}

// Random Dens+/Prob triples and diffeos for the whole invariant family.
TEST(MetricsProperty, InvariantFormsOnCircle) {
  EXPECT_LE(max_of(invariance_trials(fisher_rao_form(), make_circle(256), 10, 1)), 1e-8);
  EXPECT_LE(max_of(invariance_trials(two_param_family(1.5, -0.7), make_circle(256), 10, 2, {false, 3})), 1e-8);
  for (int n = 0; n <= 2; ++n)
    EXPECT_LE(max_of(invariance_trials(sobolev_dens_form(n), make_circle(256), 5, 3 + n)), 1e-6) << "n=" << n;
}

TEST(MetricsProperty, FisherRaoInvariantOnTorus) {
  EXPECT_LE(max_of(invariance_trials(fisher_rao_form(), make_torus(64, 64), 2, 11)), 1e-5);
}

TEST(MetricsProperty, BilinearAndSymmetric) {
  Rng rng(12);
  const Grid c = make_circle(64);
  const std::vector<MetricForm> forms{fisher_rao_form(), two_param_family(2, 3), sobolev_dens_form(1),
                                      sobolev_dens_form(2), extended_form(fisher_rao_form())};
  for (const auto& G : forms) {
    const Density mu = random_density(c, rng);
    const TangentDensity a = random_tangent(c, rng, 3, false), b = random_tangent(c, rng, 3, false),
                         d = random_tangent(c, rng, 3, false);
    const TangentDensity comb(c, 1.5 * a.coeff() - 0.25 * d.coeff());
    const double lhs = G(mu, comb, b), rhs = 1.5 * G(mu, a, b) - 0.25 * G(mu, d, b);
    const double scale_ = std::abs(G(mu, a, b)) + std::abs(G(mu, d, b));
    EXPECT_LE(std::abs(lhs - rhs), 1e-12 * scale_) << G.tag;
    if (G.symmetric) EXPECT_LE(std::abs(G(mu, a, b) - G(mu, b, a)), 1e-10 * scale_) << G.tag;
  }
}

TEST(MetricsProperty, SobolevZeroIsFourTimesFisherRao) {
  Rng rng(13);
  const Grid c = make_circle(64);
  for (int i = 0; i < 20; ++i) {
    const Density mu = random_density(c, rng);
    const TangentDensity a = random_tangent(c, rng), b = random_tangent(c, rng);
    EXPECT_NEAR(sobolev_dens_metric(0, mu, a, b) / fisher_rao(mu, a, b), 4.0, 1e-12);
  }
}
