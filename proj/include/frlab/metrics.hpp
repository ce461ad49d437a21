#pragma once

// Bilinear forms on densities: Fisher-Rao, the two-constant family, the
// equivariant extension from Prob to Dens+, the Sobolev family on S^1 via
// Phi(f dtheta) = f^2 dtheta^2, and the H1-dot metric on Diff(S^1) with its
// descent to Prob(S^1).

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "frlab/density.hpp"
#include "frlab/diffeo.hpp"
#include "frlab/error.hpp"
#include "frlab/grid.hpp"

namespace frlab {

/// A bilinear form G_mu(alpha, beta) on Dens+.
struct MetricForm {
  using Evaluator = std::function<double(const Density&, const TangentDensity&, const TangentDensity&)>;

  std::string tag;
  Evaluator eval;
  bool symmetric = true;

  double operator()(const Density& mu, const TangentDensity& a, const TangentDensity& b) const {
    return eval(mu, a, b);
  }
};

/// G^FR_mu(alpha, beta) = int (alpha/mu)(beta/mu) mu.
inline double fisher_rao(const Density& mu, const TangentDensity& alpha, const TangentDensity& beta) {
  require_same_grid(mu.grid(), alpha.grid());
  require_same_grid(mu.grid(), beta.grid());
  return integrate(mu.grid(), alpha.coeff().cwiseProduct(beta.coeff()).cwiseQuotient(mu.coeff()));
}

inline MetricForm fisher_rao_form() { return {"fisher_rao", fisher_rao, true}; }

/// C1 * Fisher-Rao + C2 * (int alpha)(int beta).
inline MetricForm two_param_family(double c1, double c2) {
  return {"two_param(" + std::to_string(c1) + "," + std::to_string(c2) + ")",
          [c1, c2](const Density& mu, const TangentDensity& a, const TangentDensity& b) {
            return c1 * fisher_rao(mu, a, b) + c2 * integral(a) * integral(b);
          },
          true};
}

/// Extension of a Prob metric to Dens+: evaluate at nu = mu/mu(M) on the
/// centred tangents alpha - (int alpha) nu.
inline double extend_metric(const MetricForm& on_prob, const Density& mu, const TangentDensity& alpha,
                            const TangentDensity& beta) {
  require_same_grid(mu.grid(), alpha.grid());
  require_same_grid(mu.grid(), beta.grid());
  const Density nu = normalize_to_prob(mu);
  auto centre = [&](const TangentDensity& t) {
    return TangentDensity(mu.grid(), t.coeff() - integral(t) * nu.coeff(), true, 1e-10);
  };
  return on_prob(nu, centre(alpha), centre(beta));
}

inline MetricForm extended_form(MetricForm on_prob) {
  auto tag = "extended(" + on_prob.tag + ")";
  const bool sym = on_prob.symmetric;
  return {std::move(tag),
          [g = std::move(on_prob)](const Density& mu, const TangentDensity& a, const TangentDensity& b) {
            return extend_metric(g, mu, a, b);
          },
          sym};
}

// ---------------------------------------------------------------------------
// S^1: metrics on Met(S^1) and their pullback to Dens+(S^1)

/// g = gtilde dtheta^2 with gtilde > 0.
class CircleMetricTensor {
 public:
  CircleMetricTensor(Grid grid, Field gtilde) : grid_(std::move(grid)), gtilde_(std::move(gtilde)) {
    detail::require(grid_.kind() == GridKind::circle, "circle metric tensor needs a circle grid");
    require_samples(grid_, gtilde_);
    if (gtilde_.minCoeff() <= 0.0) throw InvalidArgument("metric tensor coefficient must be positive");
  }
  const Grid& grid() const { return grid_; }
  const Field& gtilde() const { return gtilde_; }

 private:
  Grid grid_;
  Field gtilde_;
};

/// Phi(f dtheta) = f^2 dtheta^2.
inline CircleMetricTensor phi_map(const Density& mu) {
  detail::require(mu.grid().kind() == GridKind::circle, "phi_map needs a circle grid");
  return CircleMetricTensor(mu.grid(), mu.coeff().cwiseAbs2());
}

/// dPhi at mu = f dtheta sends a dtheta to 2 f a dtheta^2 (returns 2 f a).
inline Field phi_tangent(const Density& mu, const TangentDensity& alpha) {
  require_same_grid(mu.grid(), alpha.grid());
  return 2.0 * mu.coeff().cwiseProduct(alpha.coeff());
}

/// Pullback of a symmetric 2-tensor h dtheta^2: (h o phi) * phi'^2.
inline Field pullback_quadratic(const Diffeo& phi, const Field& h, Interpolation how = {}) {
  return pullback_function(phi, h, how).cwiseProduct(phi.jac().cwiseAbs2());
}

inline CircleMetricTensor pullback_metric(const Diffeo& phi, const CircleMetricTensor& g) {
  require_same_grid(phi.grid(), g.grid());
  return CircleMetricTensor(g.grid(), pullback_quadratic(phi, g.gtilde()));
}

/// Positive Laplacian -(1/sqrt g) d((1/sqrt g) du).
inline Field laplacian_circle(const CircleMetricTensor& g, const Field& u) {
  const Grid& grid = g.grid();
  require_samples(grid, u);
  const Field inv_sqrt = g.gtilde().cwiseSqrt().cwiseInverse();
  return -inv_sqrt.cwiseProduct(differentiate(grid, inv_sqrt.cwiseProduct(differentiate(grid, u, 0)), 0));
}

/// (1 + Laplacian)^n u by repeated application.
inline Field sobolev_operator(const CircleMetricTensor& g, const Field& u, int n) {
  detail::require(n >= 0, "Sobolev order must be non-negative");
  Field v = u;
  for (int i = 0; i < n; ++i) v += laplacian_circle(g, v);
  return v;
}

/// int (h/g) (1 + Laplacian^g)^n (k/g) sqrt(g) dtheta.
inline double sobolev_met_metric(int n, const CircleMetricTensor& g, const Field& h, const Field& k) {
  const Grid& grid = g.grid();
  require_samples(grid, h);
  require_samples(grid, k);
  const Field& gt = g.gtilde();
  const Field rhs = sobolev_operator(g, k.cwiseQuotient(gt), n);
  return integrate(grid, h.cwiseQuotient(gt).cwiseProduct(rhs).cwiseProduct(gt.cwiseSqrt()));
}

/// 4 int (alpha/mu) (1 + Laplacian^{Phi(mu)})^n (beta/mu) mu.
inline double sobolev_dens_metric(int n, const Density& mu, const TangentDensity& alpha,
                                  const TangentDensity& beta) {
  detail::require(mu.grid().kind() == GridKind::circle, "sobolev_dens_metric needs a circle grid");
  require_same_grid(mu.grid(), alpha.grid());
  require_same_grid(mu.grid(), beta.grid());
  const Field& f = mu.coeff();
  const Field rhs = sobolev_operator(phi_map(mu), beta.coeff().cwiseQuotient(f), n);
  return 4.0 * integrate(mu.grid(), alpha.coeff().cwiseQuotient(f).cwiseProduct(rhs).cwiseProduct(f));
}

inline MetricForm sobolev_dens_form(int n) {
  return {"sobolev(" + std::to_string(n) + ")",
          [n](const Density& mu, const TangentDensity& a, const TangentDensity& b) {
            return sobolev_dens_metric(n, mu, a, b);
          },
          true};
}

/// 1/2 int div^{mu0}(X) div^{mu0}(Y) mu0.
inline double h1dot_diff_metric(const VectorField& X, const VectorField& Y, const Density& mu0) {
  require_same_grid(X.grid, Y.grid);
  return 0.5 * integrate(mu0.grid(), divergence(X, mu0).cwiseProduct(divergence(Y, mu0)).cwiseProduct(mu0.coeff()));
}

/// A solution X of div^{mu0}(X) mu0 = alpha on S^1, X = (A + shift)/rho0
/// with A' = alpha. Every shift is a valid lift; they differ by vertical
/// fields (shift/rho0), on which the H1-dot form is degenerate.
inline VectorField horizontal_lift(const Density& mu0, const TangentDensity& alpha, double shift = 0.0) {
  const Grid& g = mu0.grid();
  detail::require(g.kind() == GridKind::circle, "horizontal_lift needs a circle grid");
  require_same_grid(g, alpha.grid());
  const double total = integral(alpha);
  const double bound = 1e-10 * std::max(1.0, alpha.coeff().cwiseAbs().maxCoeff()) * g.volume();
  if (std::abs(total) > bound)
    throw InvalidArgument("tangent has integral " + std::to_string(total) + "; no lift to Diff exists");
  Field A = periodic_antiderivative(g, alpha.coeff());
  A.array() += shift;
  return {g, {A.cwiseQuotient(mu0.coeff())}};
}

/// Descended H1-dot metric on Prob(S^1) at mu0.
inline double descend_h1_to_prob(const Density& mu0, const TangentDensity& alpha, const TangentDensity& beta) {
  return h1dot_diff_metric(horizontal_lift(mu0, alpha), horizontal_lift(mu0, beta), mu0);
}

}  // namespace frlab
