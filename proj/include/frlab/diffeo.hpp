#pragma once

// Diffeomorphisms of S^1 and T^2 homotopic to the identity, their pullback
// action on functions and densities, flows of vector fields, and
// divergence-free fields built from stream functions.
//
// Orientation convention on T^2: i_X(dx^dy) = X^1 dy - X^2 dx, so the exact
// field of a stream function w is X = (d_y w, -d_x w).

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "frlab/density.hpp"
#include "frlab/error.hpp"
#include "frlab/grid.hpp"
#include "frlab/random.hpp"

namespace frlab {

/// Per-axis component samples of a vector field.
struct VectorField {
  Grid grid;
  std::vector<Field> components;

  const Field& operator[](int axis) const { return components.at(static_cast<std::size_t>(axis)); }
};

inline VectorField zero_field(const Grid& g) {
  return {g, std::vector<Field>(static_cast<std::size_t>(g.dims()),
                                Field::Zero(static_cast<Eigen::Index>(g.num_nodes())))};
}

/// The coordinate field d/d(axis).
inline VectorField constant_field(const Grid& g, int axis) {
  detail::check_axis(g, axis);
  VectorField X = zero_field(g);
  X.components[static_cast<std::size_t>(axis)].setOnes();
  return X;
}

/// div^{mu0}(X) = (1/rho0) sum_a d_a(rho0 X^a).
inline Field divergence(const VectorField& X, const Density& mu0) {
  require_same_grid(X.grid, mu0.grid());
  const Field& rho = mu0.coeff();
  Field out = Field::Zero(rho.size());
  for (int a = 0; a < X.grid.dims(); ++a) {
    out += differentiate(X.grid, rho.cwiseProduct(X[a]), a);
  }
  return out.cwiseQuotient(rho);
}

inline Field divergence(const VectorField& X) { return divergence(X, uniform_density(X.grid)); }

/// L_X f = sum_a X^a d_a f.
inline Field lie_derivative(const VectorField& X, const Field& f) {
  Field out = Field::Zero(f.size());
  for (int a = 0; a < X.grid.dims(); ++a) out += X[a].cwiseProduct(differentiate(X.grid, f, a));
  return out;
}

/// Exact divergence-free field of a stream function on T^2.
inline VectorField divfree_from_stream(const Grid& g, const Field& stream) {
  if (g.kind() != GridKind::torus)
    throw InvalidArgument("divfree_from_stream: stream functions need dimension >= 2 (torus grid)");
  require_samples(g, stream);
  return {g, {differentiate(g, stream, 1), -differentiate(g, stream, 0)}};
}

namespace detail {

inline double smooth_step(double t) {
  auto psi = [](double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; };
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return psi(t) / (psi(t) + psi(1.0 - t));
}

/// Periodic offset x - x0 reduced to (-pi, pi].
inline double periodic_offset(double x, double x0) {
  double d = wrap_2pi(x - x0);
  if (d > std::numbers::pi) d -= two_pi;
  return d;
}

}  // namespace detail

/// Smooth cutoff equal to 1 for r <= radius/2 and 0 for r >= 2 radius,
/// built from exp(-1/t).
inline double frame_cutoff(double r, double radius) {
  return 1.0 - detail::smooth_step((r - 0.5 * radius) / (1.5 * radius));
}

/// Divergence-free field equal to d/d(axis) near x0, supported in the
/// 2*radius ball: the exact field of w = g * (periodized coordinate).
inline VectorField localized_frame_field(const Grid& g, const Point& x0, int axis, double radius) {
  if (g.kind() != GridKind::torus) throw InvalidArgument("localized_frame_field needs a torus grid");
  detail::check_axis(g, axis);
  if (!(radius > 0.0 && radius < std::numbers::pi / 2))
    throw InvalidArgument("localized_frame_field: radius must lie in (0, pi/2)");
  Field stream = g.sample([&](const Point& p) {
    const double dx = detail::periodic_offset(p[0], x0[0]);
    const double dy = detail::periodic_offset(p[1], x0[1]);
    const double cut = frame_cutoff(std::hypot(dx, dy), radius);
    return axis == 0 ? cut * dy : -cut * dx;
  });
  return divfree_from_stream(g, stream);
}

/// Exact fields of the streams sin(jx+ky), cos(jx+ky) for |j|,|k| <= max_mode,
/// one representative per +-(j,k); optionally the two constant fields.
inline std::vector<VectorField> exact_stream_fields(const Grid& g, int max_mode,
                                                    bool include_constant = false) {
  if (g.kind() != GridKind::torus) throw InvalidArgument("exact_stream_fields needs a torus grid");
  std::vector<VectorField> out;
  for (int j = 0; j <= max_mode; ++j) {
    for (int k = -max_mode; k <= max_mode; ++k) {
      if (j == 0 && k <= 0) continue;
      out.push_back(divfree_from_stream(g, g.sample([&](const Point& p) { return std::sin(j * p[0] + k * p[1]); })));
      out.push_back(divfree_from_stream(g, g.sample([&](const Point& p) { return std::cos(j * p[0] + k * p[1]); })));
    }
  }
  if (include_constant) {
    out.push_back(constant_field(g, 0));
    out.push_back(constant_field(g, 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diffeo

/// Grid-sampled orientation-preserving diffeomorphism homotopic to the
/// identity. `forward` holds lifted image coordinates (forward - nodes is
/// periodic); `jac` holds det D(phi) at the nodes.
class Diffeo {
 public:
  Diffeo(Grid grid, std::vector<Field> forward, Field jac)
      : grid_(std::move(grid)), forward_(std::move(forward)), jac_(std::move(jac)) {
    detail::require(forward_.size() == static_cast<std::size_t>(grid_.dims()),
                    "diffeo needs one forward array per axis");
    for (const auto& f : forward_) require_samples(grid_, f);
    require_samples(grid_, jac_);
    for (Eigen::Index i = 0; i < jac_.size(); ++i) {
      if (!(jac_[i] > 0.0))
        throw NumericalError("diffeo Jacobian is not positive at node " + std::to_string(i));
    }
    if (grid_.kind() == GridKind::circle) {
      const Field& f = forward_[0];
      for (Eigen::Index i = 1; i < f.size(); ++i) {
        if (!(f[i] > f[i - 1])) throw NumericalError("circle diffeo lift is not increasing");
      }
      if (!(f[f.size() - 1] < f[0] + two_pi)) throw NumericalError("circle diffeo lift wraps more than once");
    }
  }

  const Grid& grid() const { return grid_; }
  const std::vector<Field>& forward() const { return forward_; }
  const Field& jac() const { return jac_; }

  /// forward - identity along `axis` (a periodic function).
  Field displacement(int axis) const { return forward_.at(static_cast<std::size_t>(axis)) - grid_.nodes(axis); }

 private:
  Grid grid_;
  std::vector<Field> forward_;
  Field jac_;
};

inline Diffeo identity_diffeo(const Grid& g) {
  std::vector<Field> fwd;
  for (int a = 0; a < g.dims(); ++a) fwd.push_back(g.nodes(a));
  return Diffeo(g, std::move(fwd), Field::Ones(static_cast<Eigen::Index>(g.num_nodes())));
}

/// phi(theta) = theta + psi(theta), jac = 1 + psi'.
inline Diffeo circle_diffeo_from_periodic(const Grid& g, const Field& psi) {
  detail::require(g.kind() == GridKind::circle, "circle_diffeo_from_periodic needs a circle grid");
  require_samples(g, psi);
  Field jac = Field::Ones(psi.size()) + differentiate(g, psi, 0);
  if (jac.minCoeff() <= 0.0)
    throw InvalidArgument("theta + psi is not monotone (min of 1 + psi' is " +
                          std::to_string(jac.minCoeff()) + ")");
  return Diffeo(g, {g.nodes(0) + psi}, std::move(jac));
}

/// Field value and Jacobian dv[i][j] = d_j X^i at a point.
struct FieldEval {
  std::array<double, 2> v{0.0, 0.0};
  std::array<std::array<double, 2>, 2> dv{};
};

/// Possibly time-dependent vector field evaluated anywhere.
using FlowField = std::function<FieldEval(double t, const Point& p)>;

/// One leg of a flow: integrate `field` over [0, duration] in `steps` RK4 steps.
struct FlowSegment {
  FlowField field;
  double duration = 1.0;
  int steps = 1;
};

/// Autonomous field from grid samples through the given interpolation.
inline FlowField field_sampler(const VectorField& X, Interpolation how) {
  auto interps = std::make_shared<std::vector<Interpolant>>();
  for (const auto& c : X.components) interps->emplace_back(X.grid, c, how);
  return [interps](double, const Point& p) {
    FieldEval e;
    for (std::size_t a = 0; a < interps->size(); ++a) {
      const ValueGrad vg = (*interps)[a].eval(p);
      e.v[a] = vg.value;
      e.dv[a] = vg.grad;
    }
    return e;
  };
}

namespace detail {

struct FlowState {
  std::array<double, 2> p{0.0, 0.0};
  std::array<std::array<double, 2>, 2> J{{{1.0, 0.0}, {0.0, 1.0}}};
};

inline FlowState flow_rhs(const FlowField& field, double t, const FlowState& s, int dims) {
  const FieldEval e = field(t, {s.p[0], s.p[1]});
  FlowState d;
  d.J = {{{0.0, 0.0}, {0.0, 0.0}}};
  for (int i = 0; i < dims; ++i) {
    d.p[static_cast<std::size_t>(i)] = e.v[static_cast<std::size_t>(i)];
    for (int j = 0; j < dims; ++j) {
      double acc = 0.0;
      for (int k = 0; k < dims; ++k) acc += e.dv[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * s.J[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      d.J[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = acc;
    }
  }
  return d;
}

inline FlowState axpy(const FlowState& s, double h, const FlowState& d) {
  FlowState r;
  for (std::size_t i = 0; i < 2; ++i) {
    r.p[i] = s.p[i] + h * d.p[i];
    for (std::size_t j = 0; j < 2; ++j) r.J[i][j] = s.J[i][j] + h * d.J[i][j];
  }
  return r;
}

inline double det(const FlowState& s, int dims) {
  return dims == 1 ? s.J[0][0] : s.J[0][0] * s.J[1][1] - s.J[0][1] * s.J[1][0];
}

}  // namespace detail

/// Flow map through consecutive segments; positions by classical RK4 with
/// the variational equation dJ/dt = DX J integrated alongside, jac = det J.
inline Diffeo flow_diffeo(const Grid& g, const std::vector<FlowSegment>& segments) {
  const int dims = g.dims();
  const auto N = static_cast<Eigen::Index>(g.num_nodes());
  std::vector<Field> fwd(static_cast<std::size_t>(dims), Field(N));
  Field jac(N);
  for (const auto& seg : segments) detail::require(seg.steps >= 1, "flow needs at least one step");
  for (Eigen::Index n = 0; n < N; ++n) {
    detail::FlowState s;
    const Point x = g.point(static_cast<std::size_t>(n));
    s.p = {x[0], x[1]};
    for (const auto& seg : segments) {
      const double h = seg.duration / seg.steps;
      for (int k = 0; k < seg.steps; ++k) {
        const double t = k * h;
        const auto k1 = detail::flow_rhs(seg.field, t, s, dims);
        const auto k2 = detail::flow_rhs(seg.field, t + h / 2, detail::axpy(s, h / 2, k1), dims);
        const auto k3 = detail::flow_rhs(seg.field, t + h / 2, detail::axpy(s, h / 2, k2), dims);
        const auto k4 = detail::flow_rhs(seg.field, t + h, detail::axpy(s, h, k3), dims);
        for (std::size_t i = 0; i < 2; ++i) {
          s.p[i] += h / 6 * (k1.p[i] + 2 * k2.p[i] + 2 * k3.p[i] + k4.p[i]);
          for (std::size_t j = 0; j < 2; ++j)
            s.J[i][j] += h / 6 * (k1.J[i][j] + 2 * k2.J[i][j] + 2 * k3.J[i][j] + k4.J[i][j]);
        }
        if (!(detail::det(s, dims) > 0.0))
          throw NumericalError("flow Jacobian became non-positive at node " + std::to_string(n));
      }
    }
    for (int a = 0; a < dims; ++a) fwd[static_cast<std::size_t>(a)][n] = s.p[static_cast<std::size_t>(a)];
    jac[n] = detail::det(s, dims);
  }
  return Diffeo(g, std::move(fwd), std::move(jac));
}

inline Diffeo flow_diffeo(const Grid& g, const FlowField& field, double T, int steps) {
  return flow_diffeo(g, std::vector<FlowSegment>{{field, T, steps}});
}

/// Time-T flow of a sampled autonomous field.
inline Diffeo flow_diffeo(const VectorField& X, double T, int steps) {
  return flow_diffeo(X.grid, field_sampler(X, flow_interpolation(X.grid)), T, steps);
}

inline Points forward_points(const Diffeo& phi) { return phi.forward(); }

/// f o phi at the nodes.
inline Field pullback_function(const Diffeo& phi, const Field& f, Interpolation how = {}) {
  return interpolate(phi.grid(), f, phi.forward(), how);
}

/// phi^* mu: coefficient (f o phi) * jac.
inline Density pullback_density(const Diffeo& phi, const Density& mu, Interpolation how = {}) {
  require_same_grid(phi.grid(), mu.grid());
  Field c = pullback_function(phi, mu.coeff(), how).cwiseProduct(phi.jac());
  if (c.minCoeff() <= 0.0)
    throw NumericalError("pullback lost positivity (interpolation undershoot; grid too coarse)");
  return Density(mu.grid(), std::move(c));
}

inline TangentDensity pullback_tangent(const Diffeo& phi, const TangentDensity& alpha,
                                       Interpolation how = {}) {
  require_same_grid(phi.grid(), alpha.grid());
  Field c = pullback_function(phi, alpha.coeff(), how).cwiseProduct(phi.jac());
  if (!alpha.prob_tangent()) return TangentDensity(alpha.grid(), std::move(c));
  try {
    return TangentDensity(alpha.grid(), std::move(c), true, 1e-6);
  } catch (const InvalidArgument& e) {
    throw NumericalError(std::string("pullback did not preserve the zero integral: ") + e.what());
  }
}

/// phi o psi.
inline Diffeo compose(const Diffeo& phi, const Diffeo& psi, Interpolation how = {}) {
  require_same_grid(phi.grid(), psi.grid());
  const Grid& g = phi.grid();
  std::vector<Field> fwd;
  for (int a = 0; a < g.dims(); ++a) {
    fwd.push_back(psi.forward()[static_cast<std::size_t>(a)] +
                  interpolate(g, phi.displacement(a), psi.forward(), how));
  }
  Field jac = interpolate(g, phi.jac(), psi.forward(), how).cwiseProduct(psi.jac());
  return Diffeo(g, std::move(fwd), std::move(jac));
}

/// phi^{-1} by per-node Newton iteration on the lifted map.
inline Diffeo inverse(const Diffeo& phi, double tol = 1e-13, int max_iter = 100) {
  const Grid& g = phi.grid();
  const auto N = static_cast<Eigen::Index>(g.num_nodes());
  std::vector<Interpolant> disp;
  for (int a = 0; a < g.dims(); ++a) disp.emplace_back(g, phi.displacement(a));
  std::vector<Field> fwd(static_cast<std::size_t>(g.dims()), Field(N));
  Field jac(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Point x = g.point(static_cast<std::size_t>(n));
    Point s = x;
    bool converged = false;
    if (g.dims() == 1) {
      s[0] = x[0] - disp[0].value(x);
      for (int it = 0; it < max_iter && !converged; ++it) {
        const ValueGrad d = disp[0].eval(s);
        const double step = (s[0] + d.value - x[0]) / (1.0 + d.grad[0]);
        s[0] -= step;
        converged = std::abs(step) < tol;
      }
      jac[n] = 1.0 / (1.0 + disp[0].eval(s).grad[0]);
    } else {
      s = {x[0] - disp[0].value(x), x[1] - disp[1].value(x)};
      for (int it = 0; it < max_iter && !converged; ++it) {
        const ValueGrad dx = disp[0].eval(s), dy = disp[1].eval(s);
        const double r0 = s[0] + dx.value - x[0], r1 = s[1] + dy.value - x[1];
        const double a = 1.0 + dx.grad[0], b = dx.grad[1], c = dy.grad[0], d = 1.0 + dy.grad[1];
        const double det = a * d - b * c;
        const double step0 = (d * r0 - b * r1) / det, step1 = (a * r1 - c * r0) / det;
        s[0] -= step0;
        s[1] -= step1;
        converged = std::hypot(step0, step1) < tol;
      }
      const ValueGrad dx = disp[0].eval(s), dy = disp[1].eval(s);
      const double det = (1.0 + dx.grad[0]) * (1.0 + dy.grad[1]) - dx.grad[1] * dy.grad[0];
      jac[n] = 1.0 / det;
    }
    if (!converged) throw NumericalError("inverse iteration did not converge at node " + std::to_string(n));
    for (int a = 0; a < g.dims(); ++a) fwd[static_cast<std::size_t>(a)][n] = s[static_cast<std::size_t>(a)];
  }
  return Diffeo(g, std::move(fwd), std::move(jac));
}

// ---------------------------------------------------------------------------
// Random samplers for invariance harnesses

/// theta + s + psi(theta) with random rotation s and band-limited psi,
/// ||psi'||_inf <= 0.5.
inline Diffeo random_circle_diffeo(const Grid& g, Rng& rng, int max_mode = 4) {
  Field psi = random_band_limited(g, rng, max_mode, 1.0);
  const double slope = differentiate(g, psi, 0).cwiseAbs().maxCoeff();
  psi *= uniform(rng, 0.1, 0.5) / slope;
  psi.array() += uniform(rng, 0.0, two_pi);
  return circle_diffeo_from_periodic(g, psi);
}

/// Composition of 1-3 flows of random low-frequency exact fields
/// (streams with |j|,|k| <= 2), each with peak speed `speed`.
inline Diffeo random_torus_diffeo(const Grid& g, Rng& rng, double speed = 0.5, int steps = 16) {
  detail::require(g.kind() == GridKind::torus, "random_torus_diffeo needs a torus grid");
  const int legs = 1 + static_cast<int>(rng() % 3);
  std::vector<FlowSegment> segments;
  for (int l = 0; l < legs; ++l) {
    Field stream = random_band_limited(g, rng, 2, 1.0);
    VectorField X = divfree_from_stream(g, stream);
    const double peak = std::sqrt((X[0].array().square() + X[1].array().square()).maxCoeff());
    X.components[0] *= speed / peak;
    X.components[1] *= speed / peak;
    segments.push_back({field_sampler(X, flow_interpolation(g)), 1.0, steps});
  }
  return flow_diffeo(g, segments);
}

inline Diffeo random_diffeo(const Grid& g, Rng& rng) {
  return g.kind() == GridKind::circle ? random_circle_diffeo(g, rng) : random_torus_diffeo(g, rng);
}

// ---------------------------------------------------------------------------
// JSON: {kind, sizes, forward: [axis arrays], jac}

inline nlohmann::json to_json(const Diffeo& phi) {
  auto j = grid_to_json(phi.grid());
  j["forward"] = nlohmann::json::array();
  for (const auto& f : phi.forward()) j["forward"].push_back(field_to_json(f));
  j["jac"] = field_to_json(phi.jac());
  return j;
}

inline Diffeo diffeo_from_json(const nlohmann::json& j) {
  Grid g = grid_from_json(j);
  try {
    std::vector<Field> fwd;
    for (const auto& a : j.at("forward")) fwd.push_back(field_from_json(a));
    return Diffeo(g, std::move(fwd), field_from_json(j.at("jac")));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed diffeo JSON: ") + e.what());
  }
}

}  // namespace frlab
