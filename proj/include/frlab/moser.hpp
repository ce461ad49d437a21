#pragma once

// Moser normalization: for mu in Dens+ find phi with phi^* mu = mu(M) mu0.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "frlab/density.hpp"
#include "frlab/diffeo.hpp"
#include "frlab/error.hpp"
#include "frlab/grid.hpp"

namespace frlab {

struct MoserResult {
  Diffeo map;
  double mass = 0.0;      ///< c = mu(M)
  double residual = 0.0;  ///< ||phi^* mu - c mu0||_inf / (c min rho0)
  double min_jac = 0.0;
};

/// ||phi^* mu - c mu0||_inf / (c min rho0).
inline double moser_residual(const Diffeo& phi, const Density& mu, const Density& mu0) {
  const double c = total_mass(mu);
  const Field pulled = pullback_function(phi, mu.coeff()).cwiseProduct(phi.jac());
  return (pulled - c * mu0.coeff()).cwiseAbs().maxCoeff() / (c * mu0.coeff().minCoeff());
}

namespace detail {

inline void require_prob(const Density& mu0) {
  if (std::abs(total_mass(mu0) - 1.0) > 1e-10) throw InvalidArgument("reference density mu0 must have mass 1");
}

/// F(x) = int_0^x f over the lift, evaluated from Fourier data.
class CumulativeMass {
 public:
  CumulativeMass(const Grid& g, const Field& f)
      : mean_(f.mean()), periodic_(g, periodic_antiderivative(g, f)), density_(g, f) {
    offset_ = periodic_.value({0.0, 0.0});
  }
  double operator()(double x) const { return mean_ * x + periodic_.value({x, 0.0}) - offset_; }
  double derivative(double x) const { return density_.value({x, 0.0}); }

 private:
  double mean_;
  double offset_ = 0.0;
  TrigInterpolant periodic_;
  TrigInterpolant density_;
};

}  // namespace detail

/// Explicit construction on S^1: phi = F^{-1} o (c F0) with F, F0 the
/// cumulative masses of mu and mu0, solved per node by safeguarded Newton.
inline MoserResult moser_circle(const Density& mu, const Density& mu0) {
  const Grid& g = mu.grid();
  detail::require(g.kind() == GridKind::circle, "moser_circle needs a circle grid");
  require_same_grid(g, mu0.grid());
  detail::require_prob(mu0);
  const double c = total_mass(mu);
  const detail::CumulativeMass F(g, mu.coeff());
  const detail::CumulativeMass F0(g, mu0.coeff());
  const auto N = static_cast<Eigen::Index>(g.num_nodes());
  Field psi(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double theta = g.coord(static_cast<std::size_t>(i), 0);
    const double target = c * F0(theta);
    double lo = 0.0, hi = two_pi, x = theta;
    bool converged = false;
    for (int it = 0; it < 200 && !converged; ++it) {
      const double r = F(x) - target;
      if (std::abs(r) <= 1e-15 * c) {
        converged = true;
        break;
      }
      if (r > 0.0) hi = std::min(hi, x); else lo = std::max(lo, x);
      double next = x - r / F.derivative(x);
      if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
      converged = std::abs(next - x) < 1e-15 * two_pi || hi - lo < 1e-15;
      x = next;
    }
    if (!converged) throw NumericalError("Moser inversion did not converge at node " + std::to_string(i));
    psi[i] = x - theta;
  }
  Diffeo phi = circle_diffeo_from_periodic(g, psi);
  const double res = moser_residual(phi, mu, mu0);
  const double jmin = phi.jac().minCoeff();
  return {std::move(phi), c, res, jmin};
}

struct MoserTorusOptions {
  int steps = 100;
  double tolerance = 1e-3;  ///< residuals above 10x this are reported as failures
};

/// Path method on T^2: mu_t = (1-t) c mu0 + t mu, Delta u = rho_mu - c rho0,
/// X_t = -grad u / rho_t; the time-1 flow pulls mu back to c mu0.
inline MoserResult moser_torus(const Density& mu, const Density& mu0, MoserTorusOptions opt = {}) {
  const Grid& g = mu.grid();
  detail::require(g.kind() == GridKind::torus, "moser_torus needs a torus grid");
  require_same_grid(g, mu0.grid());
  detail::require_prob(mu0);
  detail::require(opt.steps >= 10, "moser_torus needs at least 10 steps");
  const double c = total_mass(mu);
  const Field u = solve_poisson(g, mu.coeff() - c * mu0.coeff());
  const Interpolation how = flow_interpolation(g);

  struct Parts {
    Interpolant ux, uy, rho_mu, rho_0;
  };
  auto parts = std::make_shared<Parts>(Parts{Interpolant(g, differentiate(g, u, 0), how),
                                             Interpolant(g, differentiate(g, u, 1), how),
                                             Interpolant(g, mu.coeff(), how),
                                             Interpolant(g, mu0.coeff(), how)});
  FlowField field = [parts, c](double t, const Point& p) {
    const ValueGrad gx = parts->ux.eval(p), gy = parts->uy.eval(p);
    const ValueGrad rm = parts->rho_mu.eval(p), r0 = parts->rho_0.eval(p);
    const double rho = (1.0 - t) * c * r0.value + t * rm.value;
    const std::array<double, 2> drho{(1.0 - t) * c * r0.grad[0] + t * rm.grad[0],
                                     (1.0 - t) * c * r0.grad[1] + t * rm.grad[1]};
    const std::array<ValueGrad, 2> grad_u{gx, gy};
    FieldEval e;
    for (std::size_t i = 0; i < 2; ++i) {
      e.v[i] = -grad_u[i].value / rho;
      for (std::size_t j = 0; j < 2; ++j)
        e.dv[i][j] = -grad_u[i].grad[j] / rho + grad_u[i].value * drho[j] / (rho * rho);
    }
    return e;
  };
  Diffeo phi = flow_diffeo(g, field, 1.0, opt.steps);
  const double res = moser_residual(phi, mu, mu0);
  if (!(res <= 10.0 * opt.tolerance))
    throw NumericalError("Moser flow residual " + std::to_string(res) + " exceeds 10x tolerance " +
                         std::to_string(opt.tolerance) + " (steps " + std::to_string(opt.steps) +
                         ", grid " + std::to_string(g.size(0)) + "x" + std::to_string(g.size(1)) + ")");
  const double jmin = phi.jac().minCoeff();
  return {std::move(phi), c, res, jmin};
}

inline MoserResult moser(const Density& mu, const Density& mu0, MoserTorusOptions opt = {}) {
  return mu.grid().kind() == GridKind::circle ? moser_circle(mu, mu0) : moser_torus(mu, mu0, opt);
}

}  // namespace frlab
