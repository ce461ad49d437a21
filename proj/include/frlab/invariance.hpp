#pragma once

// Invariance testing of metric forms under random diffeomorphisms, and the
// finite-dimensional classification experiment: kernel forms A (bilinear
// forms f^T A g on node samples at the reference density mu0) that satisfy
// D_X^T A + A D_X = 0 for a family of divergence-free fields X.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <lapacke.h>
#include <Eigen/Dense>

#include "frlab/density.hpp"
#include "frlab/diffeo.hpp"
#include "frlab/error.hpp"
#include "frlab/grid.hpp"
#include "frlab/metrics.hpp"
#include "frlab/random.hpp"

namespace frlab {

/// |G_{phi^*mu}(phi^*a, phi^*b) - G_mu(a, b)| / (|G_mu(a, b)| + 1e-30).
inline double invariance_defect(const MetricForm& G, const Density& mu, const TangentDensity& alpha,
                                const TangentDensity& beta, const Diffeo& phi) {
  const double before = G(mu, alpha, beta);
  const double after = G(pullback_density(phi, mu), pullback_tangent(phi, alpha), pullback_tangent(phi, beta));
  return std::abs(after - before) / (std::abs(before) + 1e-30);
}

/// Runs fn(i) for i in [0, count) on up to hardware_concurrency threads.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, count == 0 ? 1 : count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < count; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct InvarianceTrialOptions {
  bool prob = true;  ///< Prob data (mass 1, zero-integral tangents) or general Dens+ data
  int max_mode = 3;
};

/// One random (mu, alpha, beta, phi) per trial from the stream (seed, trial).
inline double invariance_trial(const MetricForm& G, const Grid& g, std::uint64_t seed, std::uint64_t trial,
                               InvarianceTrialOptions opt = {}) {
  Rng rng = trial_stream(seed, trial);
  const Density mu = random_density(g, rng, opt.max_mode, opt.prob);
  const TangentDensity a = random_tangent(g, rng, opt.max_mode, opt.prob);
  const TangentDensity b = random_tangent(g, rng, opt.max_mode, opt.prob);
  const Diffeo phi = random_diffeo(g, rng);
  return invariance_defect(G, mu, a, b, phi);
}

inline std::vector<double> invariance_trials(const MetricForm& G, const Grid& g, std::size_t trials,
                                             std::uint64_t seed, InvarianceTrialOptions opt = {}) {
  std::vector<double> out(trials);
  parallel_for(trials, [&](std::size_t i) { out[i] = invariance_trial(G, g, seed, i, opt); });
  return out;
}

// ---------------------------------------------------------------------------
// Kernel forms

/// Bilinear form G(f, g) = f^T A g on node samples.
struct KernelForm {
  Grid grid;
  Eigen::MatrixXd A;
  bool symmetric = false;

  double operator()(const Field& f, const Field& g) const { return f.dot(A * g); }
};

/// Fisher-Rao at mu0 in function coordinates: diag(w rho0).
inline KernelForm fr_kernel(const Density& mu0) {
  const Field wr = mu0.grid().weight() * mu0.coeff();
  return {mu0.grid(), wr.asDiagonal().toDenseMatrix(), true};
}

/// (int f mu0)(int g mu0): (w rho0)(w rho0)^T.
inline KernelForm mass_kernel(const Density& mu0) {
  const Field wr = mu0.grid().weight() * mu0.coeff();
  return {mu0.grid(), wr * wr.transpose(), true};
}

/// Matrix of the Lie derivative f -> X.grad f, in the form
/// 1/2 (diag(X^a) D_a + diag(1/rho0) D_a diag(rho0 X^a)), which agrees with
/// X.grad f for div^{mu0}-free X and is skew-adjoint for diag(w rho0).
inline Eigen::MatrixXd lie_derivative_matrix(const VectorField& X, const Density& mu0) {
  const Grid& g = X.grid;
  require_same_grid(g, mu0.grid());
  const auto N = static_cast<Eigen::Index>(g.num_nodes());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(N, N);
  const Field inv_rho = mu0.coeff().cwiseInverse();
  for (int a = 0; a < g.dims(); ++a) {
    const Eigen::MatrixXd D = differentiation_matrix(g, a);
    L += X[a].asDiagonal() * D;
    L += inv_rho.asDiagonal() * D * (mu0.coeff().cwiseProduct(X[a])).asDiagonal();
  }
  return 0.5 * L;
}

inline Eigen::MatrixXd lie_derivative_matrix(const VectorField& X) {
  return lie_derivative_matrix(X, uniform_density(X.grid));
}

/// Largest N^2 for which the dense kernel-space operator is formed.
inline constexpr std::size_t dense_gram_cap = 8192;

struct ConstraintGram {
  Grid grid;
  Density mu0;
  Eigen::MatrixXd Q;  ///< N^2 x N^2, acting on column-major vec(A)
  std::size_t field_count = 0;
};

inline void require_divergence_free(const VectorField& X, const Density& mu0, std::size_t index) {
  const double scale = std::max(1.0, [&] {
    double m = 0.0;
    for (const auto& c : X.components) m = std::max(m, c.cwiseAbs().maxCoeff());
    return m;
  }());
  const double div = divergence(X, mu0).cwiseAbs().maxCoeff();
  if (div > 1e-10 * scale)
    throw InvalidArgument("field " + std::to_string(index) + " is not divergence-free (max |div| = " +
                          std::to_string(div) + ")");
}

inline void require_gram_size(const Grid& g) {
  const std::size_t N = g.num_nodes();
  if (N * N > dense_gram_cap)
    throw InvalidArgument("kernel space of dimension " + std::to_string(N * N) + " exceeds the dense cap " +
                          std::to_string(dense_gram_cap));
}

/// Q = sum_X M_X^T M_X with M_X(A) = D_X^T A + A D_X. With B = D_X^T and
/// C = B^T B: M_X^T M_X = I(x)C + C(x)I + B(x)B^T + B^T(x)B.
inline ConstraintGram constraint_gram(const Density& mu0, const std::vector<VectorField>& fields) {
  const Grid& g = mu0.grid();
  require_gram_size(g);
  const auto N = static_cast<Eigen::Index>(g.num_nodes());
  const Eigen::Index NN = N * N;
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(NN, NN);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(N, N);
  for (std::size_t f = 0; f < fields.size(); ++f) {
    require_same_grid(g, fields[f].grid);
    require_divergence_free(fields[f], mu0, f);
    const Eigen::MatrixXd B = lie_derivative_matrix(fields[f], mu0).transpose();
    S.noalias() += B.transpose() * B;
    // (P (x) R)(i N + k, j N + l) = P(i, j) R(k, l)
    for (Eigen::Index j = 0; j < N; ++j) {
      for (Eigen::Index i = 0; i < N; ++i) {
        const double bij = B(i, j), bji = B(j, i);
        if (bij == 0.0 && bji == 0.0) continue;
        auto block = Q.block(i * N, j * N, N, N);
        block.noalias() += bij * B.transpose();
        block.noalias() += bji * B;
      }
    }
  }
  for (Eigen::Index i = 0; i < N; ++i) {
    Q.block(i * N, i * N, N, N) += S;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (S(i, j) != 0.0) Q.block(i * N, j * N, N, N).diagonal().array() += S(i, j);
    }
  }
  return {g, mu0, std::move(Q), fields.size()};
}

inline Eigen::VectorXd vec(const Eigen::MatrixXd& A) {
  return Eigen::Map<const Eigen::VectorXd>(A.data(), A.size());
}

inline Eigen::MatrixXd unvec(const Eigen::VectorXd& v, Eigen::Index n) {
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), n, n);
}

/// Frobenius-relative defect ||Q vec(A)|| / (||Q||_2 ||A||_F).
inline double gram_defect(const ConstraintGram& gram, const Eigen::MatrixXd& A, double q_norm) {
  return (gram.Q * vec(A)).norm() / (q_norm * A.norm());
}

// ---------------------------------------------------------------------------
// Two-constant fit

struct TwoParamFit {
  double c1 = 0.0;
  double c2 = 0.0;
  double residual = 0.0;   ///< ||A - c1 A_FR - c2 A_mass||_F / ||A||_F
  bool degenerate = false;  ///< A = 0; residual undefined
};

/// Frobenius least-squares projection of A onto span{A_FR, A_mass}.
inline TwoParamFit fit_two_param(const KernelForm& A, const Density& mu0) {
  require_same_grid(A.grid, mu0.grid());
  const double norm = A.A.norm();
  if (norm == 0.0) return {0.0, 0.0, 0.0, true};
  const Eigen::MatrixXd fr = fr_kernel(mu0).A, ms = mass_kernel(mu0).A;
  Eigen::Matrix2d G;
  G << (fr.array() * fr.array()).sum(), (fr.array() * ms.array()).sum(),
       (ms.array() * fr.array()).sum(), (ms.array() * ms.array()).sum();
  Eigen::Vector2d rhs((fr.array() * A.A.array()).sum(), (ms.array() * A.A.array()).sum());
  const Eigen::Vector2d c = G.fullPivLu().solve(rhs);
  const double res = (A.A - c[0] * fr - c[1] * ms).norm() / norm;
  return {c[0], c[1], res, false};
}

// ---------------------------------------------------------------------------
// Null space of Q

struct SpectrumReport {
  Grid grid;
  std::size_t field_count = 0;
  Eigen::VectorXd eigenvalues;  ///< all eigenvalues of Q, ascending
  double lambda_max = 0.0;
  double threshold = 0.0;        ///< relative null threshold tau
  std::size_t null_count = 0;    ///< #{lambda <= tau lambda_max}
  double gap_ratio = 0.0;        ///< lambda_{m+1} / |lambda_m|, m = null_count
  std::vector<double> principal_angles_deg;  ///< null space vs span{A_FR, A_mass}
  std::vector<KernelForm> basis;             ///< smallest-k eigenvectors as kernels
  std::vector<TwoParamFit> fits;             ///< fit of each null basis kernel
};

namespace detail {

/// Orthonormal basis of the column span (thin QR).
inline Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& M) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  return qr.householderQ() * Eigen::MatrixXd::Identity(M.rows(), M.cols());
}

}  // namespace detail

/// Principal angles (degrees, ascending) between span(U) and span(V).
inline std::vector<double> principal_angles(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) {
  if (U.cols() == 0 || V.cols() == 0) return {};
  const Eigen::MatrixXd Qu = detail::orthonormal_columns(U), Qv = detail::orthonormal_columns(V);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Qu.transpose() * Qv);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    const double s = std::clamp(svd.singularValues()[i], -1.0, 1.0);
    out.push_back(std::acos(s) * 180.0 / std::numbers::pi);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Columns vec(A_FR), vec(A_mass).
inline Eigen::MatrixXd reference_span(const Density& mu0) {
  const auto N = static_cast<Eigen::Index>(mu0.grid().num_nodes());
  Eigen::MatrixXd R(N * N, 2);
  R.col(0) = vec(fr_kernel(mu0).A);
  R.col(1) = vec(mass_kernel(mu0).A);
  return R;
}

/// Symmetric eigendecomposition (LAPACK dsyevd); eigenvalues ascending.
inline void symmetric_eigen(Eigen::MatrixXd& A_in_vectors_out, Eigen::VectorXd& values) {
  const auto n = static_cast<lapack_int>(A_in_vectors_out.rows());
  values.resize(n);
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, A_in_vectors_out.data(), n, values.data());
  if (info != 0) throw NumericalError("symmetric eigensolver failed (info " + std::to_string(info) + ")");
}

/// Smallest-k eigenpairs of Q, null count at tau * lambda_max, and principal
/// angles between the numerical null space and span{A_FR, A_mass}.
inline SpectrumReport invariant_nullspace(const ConstraintGram& gram, std::size_t k = 4, double tau = 1e-8) {
  detail::require(k >= 1, "invariant_nullspace needs k >= 1");
  const auto N = static_cast<Eigen::Index>(gram.grid.num_nodes());
  Eigen::MatrixXd V = gram.Q;
  Eigen::VectorXd lambda;
  symmetric_eigen(V, lambda);

  SpectrumReport rep{gram.grid, gram.field_count, lambda};
  rep.lambda_max = lambda.size() ? lambda[lambda.size() - 1] : 0.0;
  rep.threshold = tau;
  const double cut = tau * std::max(rep.lambda_max, 0.0);
  std::size_t m = 0;
  while (m < static_cast<std::size_t>(lambda.size()) && lambda[static_cast<Eigen::Index>(m)] <= cut) ++m;
  if (rep.lambda_max == 0.0) m = static_cast<std::size_t>(lambda.size());
  rep.null_count = m;
  if (m >= 1 && m < static_cast<std::size_t>(lambda.size())) {
    const double below = std::max(std::abs(lambda[static_cast<Eigen::Index>(m - 1)]),
                                  std::numeric_limits<double>::min());
    rep.gap_ratio = lambda[static_cast<Eigen::Index>(m)] / below;
  }
  rep.principal_angles_deg = principal_angles(reference_span(gram.mu0), V.leftCols(static_cast<Eigen::Index>(m)));

  const std::size_t keep = std::min<std::size_t>(k, static_cast<std::size_t>(lambda.size()));
  for (std::size_t i = 0; i < keep; ++i) {
    KernelForm K{gram.grid, unvec(V.col(static_cast<Eigen::Index>(i)), N), false};
    K.symmetric = (K.A - K.A.transpose()).norm() <= 1e-10 * K.A.norm();
    if (i < m) rep.fits.push_back(fit_two_param(K, gram.mu0));
    rep.basis.push_back(std::move(K));
  }
  return rep;
}

/// Independent route to the same null space: stacks every M_X, built by
/// applying A -> D_X^T A + A D_X to the unit kernels, reduces the stack by
/// successive Householder QR and takes the SVD of the final triangle.
struct DirectNullspace {
  Eigen::VectorXd singular_values;  ///< descending
  std::size_t null_dim = 0;         ///< #{sigma^2 <= tau sigma_max^2}
  Eigen::MatrixXd basis;            ///< columns: vec of null kernels
};

inline DirectNullspace direct_nullspace(const Density& mu0, const std::vector<VectorField>& fields, double tau = 1e-8) {
  const Grid& g = mu0.grid();
  require_gram_size(g);
  const auto N = static_cast<Eigen::Index>(g.num_nodes());
  const Eigen::Index NN = N * N;
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(0, NN);
  for (std::size_t f = 0; f < fields.size(); ++f) {
    require_divergence_free(fields[f], mu0, f);
    const Eigen::MatrixXd D = lie_derivative_matrix(fields[f], mu0);
    Eigen::MatrixXd M(NN, NN);
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(N, N);
    for (Eigen::Index c = 0; c < NN; ++c) {
      E(c % N, c / N) = 1.0;
      M.col(c) = vec(D.transpose() * E + E * D);
      E(c % N, c / N) = 0.0;
    }
    Eigen::MatrixXd stacked(R.rows() + NN, NN);
    stacked << R, M;
    std::vector<double> tau_h(static_cast<std::size_t>(NN));
    const lapack_int info = LAPACKE_dgeqrf(LAPACK_COL_MAJOR, static_cast<lapack_int>(stacked.rows()),
                                           static_cast<lapack_int>(NN), stacked.data(),
                                           static_cast<lapack_int>(stacked.rows()), tau_h.data());
    if (info != 0) throw NumericalError("QR of the constraint stack failed");
    const Eigen::Index r = std::min(stacked.rows(), NN);
    R = stacked.topRows(r).triangularView<Eigen::Upper>();
  }
  Eigen::MatrixXd A = R;
  if (A.rows() < NN) {
    A.conservativeResize(NN, NN);
    A.bottomRows(NN - R.rows()).setZero();
  }
  Eigen::VectorXd s(NN);
  Eigen::MatrixXd U(NN, NN), VT(NN, NN);
  const lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'A', static_cast<lapack_int>(NN), static_cast<lapack_int>(NN),
                                         A.data(), static_cast<lapack_int>(NN), s.data(), U.data(),
                                         static_cast<lapack_int>(NN), VT.data(), static_cast<lapack_int>(NN));
  if (info != 0) throw NumericalError("SVD of the constraint stack failed");
  DirectNullspace out;
  out.singular_values = s;
  const double cut = tau * s[0] * s[0];
  std::size_t m = 0;
  for (Eigen::Index i = NN; i-- > 0;) {
    if (s[i] * s[i] <= cut) ++m; else break;
  }
  if (s[0] == 0.0) m = static_cast<std::size_t>(NN);
  out.null_dim = m;
  out.basis = VT.bottomRows(static_cast<Eigen::Index>(m)).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Averaging probe

struct AveragingResult {
  KernelForm averaged;
  double residual_before = 0.0;
  double residual_after = 0.0;
};

using DiffeoSampler = std::function<Diffeo(std::size_t)>;

/// Mean of P^T A P over sampled diffeos, P the interpolation matrix of phi.
inline AveragingResult average_over_diffeos(const KernelForm& A, const Density& mu0, const DiffeoSampler& sampler,
                                            std::size_t count) {
  detail::require(count >= 1, "average_over_diffeos needs count >= 1");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(A.A.rows(), A.A.cols());
  for (std::size_t i = 0; i < count; ++i) {
    const Diffeo phi = sampler(i);
    require_same_grid(phi.grid(), A.grid);
    const Eigen::MatrixXd P = interpolation_matrix(A.grid, phi.forward());
    acc.noalias() += P.transpose() * A.A * P;
  }
  acc /= static_cast<double>(count);
  KernelForm avg{A.grid, std::move(acc), A.symmetric};
  return {avg, fit_two_param(A, mu0).residual, fit_two_param(avg, mu0).residual};
}

/// A_FR/||A_FR|| + E/||E|| with E a Gaussian random matrix: an invariant
/// form hidden under noise of equal Frobenius norm.
inline KernelForm random_perturbed_kernel(const Density& mu0, Rng& rng) {
  const auto N = static_cast<Eigen::Index>(mu0.grid().num_nodes());
  Eigen::MatrixXd E(N, N);
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index i = 0; i < N; ++i) E(i, j) = normal(rng);
  const Eigen::MatrixXd fr = fr_kernel(mu0).A;
  return {mu0.grid(), fr / fr.norm() + E / E.norm(), false};
}

}  // namespace frlab
