#pragma once

// Positive densities and their tangent vectors, stored as coefficients
// against the coordinate volume form d(theta) or dx^dy.

#include <cmath>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "frlab/error.hpp"
#include "frlab/grid.hpp"

namespace frlab {

/// mu = coeff * dvol with coeff > 0 at every node.
class Density {
 public:
  Density(Grid grid, Field coeff) : grid_(std::move(grid)), coeff_(std::move(coeff)) {
    require_samples(grid_, coeff_);
    for (Eigen::Index i = 0; i < coeff_.size(); ++i) {
      if (!(coeff_[i] > 0.0) || !std::isfinite(coeff_[i]))
        throw InvalidArgument("density coefficient is not positive at node " + std::to_string(i));
    }
  }

  const Grid& grid() const { return grid_; }
  const Field& coeff() const { return coeff_; }

 private:
  Grid grid_;
  Field coeff_;
};

/// alpha = coeff * dvol. When `prob_tangent` is set the coefficient
/// integrates to zero (a tangent vector to Prob).
class TangentDensity {
 public:
  TangentDensity(Grid grid, Field coeff, bool prob_tangent = false, double rel_tol = 1e-12)
      : grid_(std::move(grid)), coeff_(std::move(coeff)), prob_tangent_(prob_tangent) {
    require_samples(grid_, coeff_);
    if (prob_tangent_) {
      const double bound = rel_tol * coeff_.cwiseAbs().maxCoeff() * grid_.volume();
      const double total = integrate(grid_, coeff_);
      if (std::abs(total) > bound)
        throw InvalidArgument("tangent flagged as Prob-tangent has integral " +
                              std::to_string(total));
    }
  }

  const Grid& grid() const { return grid_; }
  const Field& coeff() const { return coeff_; }
  bool prob_tangent() const { return prob_tangent_; }

 private:
  Grid grid_;
  Field coeff_;
  bool prob_tangent_;
};

inline Density density_from_samples(const Grid& g, Field coeff) { return Density(g, std::move(coeff)); }

/// Samples a positive function at the nodes.
template <class F>
Density density_from_function(const Grid& g, F&& f) {
  return Density(g, g.sample(std::forward<F>(f)));
}

template <class F>
TangentDensity tangent_from_function(const Grid& g, F&& f, bool prob_tangent = false) {
  return TangentDensity(g, g.sample(std::forward<F>(f)), prob_tangent);
}

/// The uniform probability density 1/(2pi)^dims.
inline Density uniform_density(const Grid& g) {
  return Density(g, Field::Constant(static_cast<Eigen::Index>(g.num_nodes()), 1.0 / g.volume()));
}

inline double total_mass(const Density& mu) { return integrate(mu.grid(), mu.coeff()); }

inline double integral(const TangentDensity& a) { return integrate(a.grid(), a.coeff()); }

inline Density normalize_to_prob(const Density& mu) {
  return Density(mu.grid(), mu.coeff() / total_mass(mu));
}

inline Density scale(const Density& mu, double c) {
  detail::require(c > 0.0, "density scale factor must be positive");
  return Density(mu.grid(), c * mu.coeff());
}

inline TangentDensity as_tangent(const Density& mu) { return TangentDensity(mu.grid(), mu.coeff()); }

/// alpha - (int alpha) mu for mu in Prob; the result integrates to zero.
inline TangentDensity project_prob_tangent(const Density& mu, const TangentDensity& alpha) {
  require_same_grid(mu.grid(), alpha.grid());
  const double mass = total_mass(mu);
  if (std::abs(mass - 1.0) > 1e-10)
    throw InvalidArgument("project_prob_tangent needs a probability density (mass " +
                          std::to_string(mass) + ")");
  Field c = alpha.coeff() - integral(alpha) * mu.coeff();
  return TangentDensity(mu.grid(), std::move(c), true);
}

// ---------------------------------------------------------------------------
// JSON: {kind, sizes, coeff: flat row-major array}

inline nlohmann::json grid_to_json(const Grid& g) {
  return {{"kind", to_string(g.kind())}, {"sizes", g.sizes()}};
}

inline Grid grid_from_json(const nlohmann::json& j) {
  try {
    return make_grid(grid_kind_from_string(j.at("kind").get<std::string>()),
                     j.at("sizes").get<std::vector<int>>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed grid JSON: ") + e.what());
  }
}

inline nlohmann::json field_to_json(const Field& f) {
  return std::vector<double>(f.data(), f.data() + f.size());
}

inline Field field_from_json(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Field>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json to_json(const Density& mu) {
  auto j = grid_to_json(mu.grid());
  j["coeff"] = field_to_json(mu.coeff());
  return j;
}

inline Density density_from_json(const nlohmann::json& j) {
  Grid g = grid_from_json(j);
  try {
    return Density(g, field_from_json(j.at("coeff")));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed density JSON: ") + e.what());
  }
}

}  // namespace frlab
