#include <cmath>

#include <gtest/gtest.h>

#include "frlab/grid.hpp"
#include "frlab/random.hpp"

using namespace frlab;

TEST(MakeGrid, CircleWeightsAreUniform) {
  const Grid g = make_circle(8);
  EXPECT_EQ(g.num_nodes(), 8u);
  EXPECT_DOUBLE_EQ(g.weight(), two_pi / 8);
  EXPECT_NEAR(integrate(g, Field::Ones(8)), two_pi, 1e-15);
  EXPECT_DOUBLE_EQ(g.coord(0, 0), 0.0);
  EXPECT_NEAR(g.coord(3, 0), 3 * two_pi / 8, 1e-15);
}

TEST(MakeGrid, TorusProductWeights) {
  const Grid g = make_torus(8, 8);
  EXPECT_EQ(g.num_nodes(), 64u);
  EXPECT_DOUBLE_EQ(g.weight(), std::pow(two_pi / 8, 2));
  EXPECT_NEAR(integrate(g, Field::Ones(64)), two_pi * two_pi, 1e-13);
}

TEST(MakeGrid, RejectsOddOrSmallSizes) {
  EXPECT_THROW(make_circle(7), InvalidArgument);
  EXPECT_THROW(make_circle(6), InvalidArgument);
  EXPECT_THROW(make_torus(8, 9), InvalidArgument);
  EXPECT_THROW(make_grid(GridKind::torus, {8}), InvalidArgument);
  EXPECT_NO_THROW(make_grid(GridKind::torus, {6, 6}, 6));
}

TEST(Integrate, AnalyticIntegrals) {
  const Grid c = make_circle(16);
  EXPECT_NEAR(integrate(c, Field::Ones(16)), two_pi, 1e-14);
  EXPECT_NEAR(integrate(c, c.sample([](const Point& p) { return std::cos(p[0]); })), 0.0, 1e-14);
  const Grid t = make_torus(16, 16);
  EXPECT_NEAR(integrate(t, t.sample([](const Point& p) { return std::sin(p[0]) * std::sin(p[1]); })), 0.0, 1e-13);
  EXPECT_THROW(integrate(c, Field::Ones(15)), InvalidArgument);
}

TEST(Differentiate, AnalyticDerivatives) {
  const Grid c = make_circle(32);
  const Field d = differentiate(c, c.sample([](const Point& p) { return std::sin(p[0]); }), 0);
  const Field e = c.sample([](const Point& p) { return std::cos(p[0]); });
  EXPECT_LE((d - e).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(differentiate(c, Field::Constant(32, 3.0), 0).cwiseAbs().maxCoeff(), 1e-13);

  const Grid t = make_torus(16, 16);
  const Field dx = differentiate(t, t.sample([](const Point& p) { return std::sin(2 * p[0]); }), 0);
  const Field ex = t.sample([](const Point& p) { return 2 * std::cos(2 * p[0]); });
  EXPECT_LE((dx - ex).cwiseAbs().maxCoeff(), 1e-12);
  const Field dy = differentiate(t, t.sample([](const Point& p) { return std::sin(2 * p[0]); }), 1);
  EXPECT_LE(dy.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(differentiate(t, ex, 2), InvalidArgument);
  EXPECT_THROW(differentiate(c, e, 1), InvalidArgument);
}

TEST(Differentiate, NyquistModeHasZeroDerivative) {
  const Grid c = make_circle(16);
  const Field nyq = c.sample([](const Point& p) { return std::cos(8 * p[0]); });
  EXPECT_LE(differentiate(c, nyq, 0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Differentiate, MatrixMatchesFft) {
  for (const Grid& g : {make_circle(12), make_torus(8, 10)}) {
    Rng rng(3);
    Field u(static_cast<Eigen::Index>(g.num_nodes()));
    for (auto& x : u) x = normal(rng);
    for (int a = 0; a < g.dims(); ++a) {
      EXPECT_LE((differentiation_matrix(g, a) * u - differentiate(g, u, a)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

// Periodic exactness and skew-adjointness hold for arbitrary samples.
TEST(DifferentiateProperty, ZeroIntegralAndSkewAdjoint) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Grid g = trial % 2 ? make_circle(8 + 2 * (trial % 7)) : make_torus(8 + 2 * (trial % 3), 8 + 2 * (trial % 4));
    Field u(static_cast<Eigen::Index>(g.num_nodes())), v(u.size());
    for (auto& x : u) x = normal(rng);
    for (auto& x : v) x = normal(rng);
    for (int a = 0; a < g.dims(); ++a) {
      const Field du = differentiate(g, u, a), dv = differentiate(g, v, a);
      EXPECT_LE(std::abs(integrate(g, du)), 1e-12);
      EXPECT_LE(std::abs(integrate(g, du.cwiseProduct(v)) + integrate(g, u.cwiseProduct(dv))), 1e-12);
    }
  }
}

TEST(Poisson, InvertsLaplacian) {
  const Grid t = make_torus(16, 16);
  Rng rng(5);
  const Field rhs = random_band_limited(t, rng, 3, 1.0);
  const Field u = solve_poisson(t, rhs);
  const Field lap = differentiate(t, differentiate(t, u, 0), 0) + differentiate(t, differentiate(t, u, 1), 1);
  EXPECT_LE((lap - rhs).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(std::abs(u.mean()), 1e-14);
}

TEST(Antiderivative, RecoversMeanFreePart) {
  const Grid c = make_circle(32);
  const Field f = c.sample([](const Point& p) { return 2.0 + std::cos(3 * p[0]); });
  const Field F = periodic_antiderivative(c, f);
  const Field e = c.sample([](const Point& p) { return std::sin(3 * p[0]) / 3; });
  EXPECT_LE((F - e).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Interpolate, ExactAtNodes) {
  Rng rng(2);
  for (const Grid& g : {make_circle(16), make_torus(8, 12), make_torus(16, 16)}) {
    Field u(static_cast<Eigen::Index>(g.num_nodes()));
    for (auto& x : u) x = normal(rng);
    Points nodes;
    for (int a = 0; a < g.dims(); ++a) nodes.push_back(g.nodes(a));
    EXPECT_LE((interpolate(g, u, nodes) - u).cwiseAbs().maxCoeff(), 1e-12);
    if (g.size(0) >= 12) {
      EXPECT_LE((interpolate(g, u, nodes, {InterpScheme::lagrange, 8}) - u).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Interpolate, AnalyticValueAndPeriodicity) {
  const Grid c = make_circle(64);
  const Field s = c.sample([](const Point& p) { return std::sin(p[0]); });
  Points q{Field::Constant(1, 0.3)};
  EXPECT_NEAR(interpolate(c, s, q)[0], std::sin(0.3), 1e-6);
  EXPECT_NEAR(interpolate(c, s, q, {InterpScheme::lagrange, 4})[0], std::sin(0.3), 1e-6);
  Points q2{Field::Constant(1, 0.3 + two_pi)};
  EXPECT_NEAR(interpolate(c, s, q2)[0], interpolate(c, s, q)[0], 1e-13);
  Points q3{Field::Constant(1, 0.3 - 3 * two_pi)};
  EXPECT_NEAR(interpolate(c, s, q3, {InterpScheme::lagrange, 8})[0],
              interpolate(c, s, q, {InterpScheme::lagrange, 8})[0], 1e-13);
}

// Trigonometric interpolation reproduces trig polynomials below Nyquist
// exactly; 12-point Lagrange does so to its interpolation order.
TEST(InterpolateProperty, ReproducesTrigPolynomials) {
  Rng rng(7);
  const Grid t = make_torus(32, 32);
  for (int trial = 0; trial < 5; ++trial) {
    const Field f = random_band_limited(t, rng, 4, 1.0);
    Points q{Field(40), Field(40)};
    for (int i = 0; i < 40; ++i) {
      q[0][i] = uniform(rng, -10, 10);
      q[1][i] = uniform(rng, -10, 10);
    }
    // exact values by re-sampling through the band-limited interpolant on a finer grid
    const Grid fine = make_torus(64, 64);
    Field ffine(static_cast<Eigen::Index>(fine.num_nodes()));
    {
      Points fine_nodes{fine.nodes(0), fine.nodes(1)};
      ffine = interpolate(t, f, fine_nodes);
    }
    const Field coarse = interpolate(t, f, q);
    const Field refined = interpolate(fine, ffine, q);
    EXPECT_LE((coarse - refined).cwiseAbs().maxCoeff(), 1e-12);
    const Field lag = interpolate(t, f, q, {InterpScheme::lagrange, 12});
    EXPECT_LE((lag - coarse).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Interpolate, GradientsMatchFiniteDifferences) {
  Rng rng(9);
  const Grid t = make_torus(16, 16);
  const Field f = random_band_limited(t, rng, 3, 1.0);
  for (auto how : {Interpolation{InterpScheme::trigonometric, 12}, Interpolation{InterpScheme::lagrange, 12}}) {
    Interpolant I(t, f, how);
    const Point p{1.234, 4.321};
    const double h = 1e-6;
    const ValueGrad vg = I.eval(p);
    const double fx = (I.value({p[0] + h, p[1]}) - I.value({p[0] - h, p[1]})) / (2 * h);
    const double fy = (I.value({p[0], p[1] + h}) - I.value({p[0], p[1] - h})) / (2 * h);
    EXPECT_NEAR(vg.grad[0], fx, 1e-7);
    EXPECT_NEAR(vg.grad[1], fy, 1e-7);
  }
}
