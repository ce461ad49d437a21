#pragma once

// Periodic computational domains S^1 = [0, 2pi) and T^2 = [0, 2pi)^2:
// quadrature, Fourier differentiation, Poisson inversion and periodic
// interpolation (trigonometric or local Lagrange).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "frlab/error.hpp"

namespace frlab {

/// Node samples of a scalar function on a grid (row-major over (ix, iy)).
using Field = Eigen::VectorXd;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

enum class GridKind { circle, torus };

inline std::string to_string(GridKind kind) {
  return kind == GridKind::circle ? "circle" : "torus";
}

inline GridKind grid_kind_from_string(const std::string& s) {
  if (s == "circle") return GridKind::circle;
  if (s == "torus") return GridKind::torus;
  throw InvalidArgument("unknown manifold '" + s + "' (expected circle or torus)");
}

/// A point in periodic coordinates; the second entry is unused on S^1.
using Point = std::array<double, 2>;

/// Uniform periodic grid with first node at 0 and circumference 2pi per axis.
class Grid {
 public:
  GridKind kind() const { return kind_; }
  int dims() const { return kind_ == GridKind::circle ? 1 : 2; }
  int size(int axis) const { return sizes_.at(static_cast<std::size_t>(axis)); }
  const std::vector<int>& sizes() const { return sizes_; }

  std::size_t num_nodes() const {
    std::size_t n = 1;
    for (int s : sizes_) n *= static_cast<std::size_t>(s);
    return n;
  }

  double spacing(int axis) const { return two_pi / size(axis); }

  /// Trapezoidal weight, identical at every node.
  double weight() const {
    double w = 1.0;
    for (int a = 0; a < dims(); ++a) w *= spacing(a);
    return w;
  }

  double volume() const { return std::pow(two_pi, dims()); }

  /// Flat index of (ix, iy); row-major, y fastest.
  std::size_t index(int ix, int iy = 0) const {
    return kind_ == GridKind::circle
               ? static_cast<std::size_t>(ix)
               : static_cast<std::size_t>(ix) * static_cast<std::size_t>(sizes_[1]) +
                     static_cast<std::size_t>(iy);
  }

  /// Per-axis integer index of a flat node.
  int axis_index(std::size_t node, int axis) const {
    if (kind_ == GridKind::circle) return static_cast<int>(node);
    auto ny = static_cast<std::size_t>(sizes_[1]);
    return axis == 0 ? static_cast<int>(node / ny) : static_cast<int>(node % ny);
  }

  double coord(std::size_t node, int axis) const {
    return axis_index(node, axis) * spacing(axis);
  }

  Point point(std::size_t node) const {
    Point p{coord(node, 0), 0.0};
    if (dims() == 2) p[1] = coord(node, 1);
    return p;
  }

  /// Coordinate array of every node along `axis`.
  Field nodes(int axis) const {
    Field out(static_cast<Eigen::Index>(num_nodes()));
    for (std::size_t i = 0; i < num_nodes(); ++i) out[static_cast<Eigen::Index>(i)] = coord(i, axis);
    return out;
  }

  /// Samples of `f` at the nodes; `f` takes a Point.
  template <class F>
  Field sample(F&& f) const {
    Field out(static_cast<Eigen::Index>(num_nodes()));
    for (std::size_t i = 0; i < num_nodes(); ++i) out[static_cast<Eigen::Index>(i)] = f(point(i));
    return out;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.kind_ == b.kind_ && a.sizes_ == b.sizes_;
  }

 private:
  Grid(GridKind kind, std::vector<int> sizes) : kind_(kind), sizes_(std::move(sizes)) {}
  friend Grid make_grid(GridKind, std::vector<int>, int);

  GridKind kind_;
  std::vector<int> sizes_;
};

/// Builds a grid; every size must be even and at least `min_size`.
/// `min_size` below 8 is meant only for brute-force cross-checks.
inline Grid make_grid(GridKind kind, std::vector<int> sizes, int min_size = 8) {
  const std::size_t expected = kind == GridKind::circle ? 1 : 2;
  detail::require(sizes.size() == expected,
                  to_string(kind) + " grid needs " + std::to_string(expected) + " size(s)");
  for (int s : sizes) {
    detail::require(s % 2 == 0, "grid size " + std::to_string(s) + " is odd");
    detail::require(s >= min_size, "grid size " + std::to_string(s) + " is below the minimum " +
                                       std::to_string(min_size));
  }
  return Grid(kind, std::move(sizes));
}

inline Grid make_circle(int n) { return make_grid(GridKind::circle, {n}); }
inline Grid make_torus(int nx, int ny) { return make_grid(GridKind::torus, {nx, ny}); }

inline void require_same_grid(const Grid& a, const Grid& b) {
  detail::require(a == b, "grid mismatch");
}

inline void require_samples(const Grid& g, const Field& f) {
  detail::require(static_cast<std::size_t>(f.size()) == g.num_nodes(),
                  "sample count " + std::to_string(f.size()) + " does not match grid with " +
                      std::to_string(g.num_nodes()) + " nodes");
}

/// Periodic trapezoid rule: sum_i w_i f_i.
inline double integrate(const Grid& g, const Field& samples) {
  require_samples(g, samples);
  return g.weight() * samples.sum();
}

namespace detail {

using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;

/// Signed wavenumber of FFT slot k on n points; the Nyquist slot maps to n/2.
inline int wavenumber(int k, int n) { return k <= n / 2 ? k : k - n; }

inline void check_axis(const Grid& g, int axis) {
  require(axis >= 0 && axis < g.dims(),
          "axis " + std::to_string(axis) + " out of range for " + to_string(g.kind()));
}

/// In-place FFT of every grid line along `axis`.
inline void fft_lines(const Grid& g, ComplexVec& data, int axis, bool inverse) {
  const int n = g.size(axis);
  const int other = g.dims() == 2 ? g.size(1 - axis) : 1;
  Eigen::FFT<double> fft;
  ComplexVec line(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
  for (int o = 0; o < other; ++o) {
    auto at = [&](int k) -> Complex& {
      std::size_t idx = g.dims() == 1 ? g.index(k) : (axis == 0 ? g.index(k, o) : g.index(o, k));
      return data[idx];
    };
    for (int k = 0; k < n; ++k) line[static_cast<std::size_t>(k)] = at(k);
    if (inverse)
      fft.inv(out, line);
    else
      fft.fwd(out, line);
    for (int k = 0; k < n; ++k) at(k) = out[static_cast<std::size_t>(k)];
  }
}

inline ComplexVec to_complex(const Field& f) {
  ComplexVec c(static_cast<std::size_t>(f.size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) c[static_cast<std::size_t>(i)] = f[i];
  return c;
}

inline Field real_part(const ComplexVec& c) {
  Field f(static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) f[static_cast<Eigen::Index>(i)] = c[i].real();
  return f;
}

/// Full multidimensional FFT (forward, unscaled).
inline ComplexVec fft_all(const Grid& g, const Field& f) {
  auto c = to_complex(f);
  for (int a = 0; a < g.dims(); ++a) fft_lines(g, c, a, false);
  return c;
}

inline Field ifft_all(const Grid& g, ComplexVec c) {
  for (int a = 0; a < g.dims(); ++a) fft_lines(g, c, a, true);
  return real_part(c);
}

/// Applies a diagonal Fourier multiplier m(kx, ky, nyquist_x, nyquist_y).
template <class Multiplier>
Field fourier_multiply(const Grid& g, const Field& f, Multiplier&& m) {
  require_samples(g, f);
  auto c = fft_all(g, f);
  const int nx = g.size(0);
  const int ny = g.dims() == 2 ? g.size(1) : 1;
  for (int ix = 0; ix < nx; ++ix) {
    for (int iy = 0; iy < ny; ++iy) {
      const int kx = wavenumber(ix, nx);
      const int ky = g.dims() == 2 ? wavenumber(iy, ny) : 0;
      const bool nyq_x = 2 * ix == nx;
      const bool nyq_y = g.dims() == 2 && 2 * iy == ny;
      c[g.index(ix, iy)] *= m(kx, ky, nyq_x, nyq_y);
    }
  }
  return ifft_all(g, std::move(c));
}

}  // namespace detail

/// Fourier derivative along `axis`; the Nyquist coefficient's derivative is zero.
inline Field differentiate(const Grid& g, const Field& samples, int axis) {
  detail::check_axis(g, axis);
  return detail::fourier_multiply(
      g, samples, [axis](int kx, int ky, bool nyq_x, bool nyq_y) -> detail::Complex {
        const bool nyq = axis == 0 ? nyq_x : nyq_y;
        if (nyq) return 0.0;
        return {0.0, static_cast<double>(axis == 0 ? kx : ky)};
      });
}

/// Mean-free periodic antiderivative on S^1 of the mean-free part of `samples`.
inline Field periodic_antiderivative(const Grid& g, const Field& samples) {
  detail::require(g.kind() == GridKind::circle, "periodic_antiderivative needs a circle grid");
  return detail::fourier_multiply(g, samples, [](int k, int, bool nyq, bool) -> detail::Complex {
    if (k == 0 || nyq) return 0.0;
    return {0.0, -1.0 / k};
  });
}

/// Zero-mean solution u of (d_xx + d_yy) u = rhs - mean(rhs).
inline Field solve_poisson(const Grid& g, const Field& rhs) {
  return detail::fourier_multiply(g, rhs, [](int kx, int ky, bool, bool) -> detail::Complex {
    const double k2 = static_cast<double>(kx) * kx + static_cast<double>(ky) * ky;
    return k2 == 0.0 ? 0.0 : -1.0 / k2;
  });
}

/// Dense matrix of `differentiate` along `axis`.
inline Eigen::MatrixXd differentiation_matrix(const Grid& g, int axis) {
  detail::check_axis(g, axis);
  const int n = g.size(axis);
  const double h = g.spacing(axis);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double sign = ((i - j) % 2 == 0) ? 1.0 : -1.0;
      d(i, j) = 0.5 * sign / std::tan((i - j) * h / 2.0);
    }
  }
  if (g.dims() == 1) return d;
  const int nx = g.size(0), ny = g.size(1);
  const int N = nx * ny;
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(N, N);
  for (int ix = 0; ix < nx; ++ix) {
    for (int iy = 0; iy < ny; ++iy) {
      const auto row = static_cast<Eigen::Index>(g.index(ix, iy));
      if (axis == 0) {
        for (int jx = 0; jx < nx; ++jx) full(row, static_cast<Eigen::Index>(g.index(jx, iy))) = d(ix, jx);
      } else {
        for (int jy = 0; jy < ny; ++jy) full(row, static_cast<Eigen::Index>(g.index(ix, jy))) = d(iy, jy);
      }
    }
  }
  return full;
}

// ---------------------------------------------------------------------------
// Interpolation

enum class InterpScheme { trigonometric, lagrange };

/// Interpolation choice. Trigonometric interpolation is exact for
/// band-limited data; local Lagrange uses `stencil` points per axis
/// (order stencil - 1) and costs O(stencil^dims) per evaluation.
struct Interpolation {
  InterpScheme scheme = InterpScheme::trigonometric;
  int stencil = 12;
};

struct ValueGrad {
  double value = 0.0;
  std::array<double, 2> grad{0.0, 0.0};
};

inline double wrap_2pi(double x) {
  double r = std::fmod(x, two_pi);
  if (r < 0.0) r += two_pi;
  if (r >= two_pi) r -= two_pi;
  return r;
}

/// Band-limited trigonometric interpolant; the Nyquist mode enters as a
/// cosine so the interpolant is real and passes through every node.
class TrigInterpolant {
 public:
  TrigInterpolant(const Grid& g, const Field& samples) : grid_(g) {
    require_samples(g, samples);
    coeff_ = detail::fft_all(g, samples);
    const double scale = 1.0 / static_cast<double>(g.num_nodes());
    for (auto& c : coeff_) c *= scale;
  }

  ValueGrad eval(const Point& p) const {
    if (grid_.dims() == 1) return eval_circle(p[0]);
    return eval_torus(p[0], p[1]);
  }

  double value(const Point& p) const { return eval(p).value; }

 private:
  // Basis values e^{ikx} (cosine at Nyquist) and their x-derivatives, FFT order.
  static void basis(int n, double x, detail::ComplexVec& b, detail::ComplexVec& db) {
    b.resize(static_cast<std::size_t>(n));
    db.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const int kk = detail::wavenumber(k, n);
      if (2 * k == n) {
        b[static_cast<std::size_t>(k)] = std::cos(kk * x);
        db[static_cast<std::size_t>(k)] = -kk * std::sin(kk * x);
      } else {
        const detail::Complex e = std::polar(1.0, kk * x);
        b[static_cast<std::size_t>(k)] = e;
        db[static_cast<std::size_t>(k)] = detail::Complex(0.0, kk) * e;
      }
    }
  }

  ValueGrad eval_circle(double x) const {
    const int n = grid_.size(0);
    ValueGrad out;
    out.value = coeff_[0].real();
    const detail::Complex z = std::polar(1.0, x);
    detail::Complex zk = 1.0;
    double v = 0.0, d = 0.0;
    for (int k = 1; k < n / 2; ++k) {
      zk *= z;
      const detail::Complex t = coeff_[static_cast<std::size_t>(k)] * zk;
      v += t.real();
      d += -k * t.imag();
    }
    const int m = n / 2;
    const double cn = coeff_[static_cast<std::size_t>(m)].real();
    out.value += 2.0 * v + cn * std::cos(m * x);
    out.grad[0] = 2.0 * d - m * cn * std::sin(m * x);
    return out;
  }

  ValueGrad eval_torus(double x, double y) const {
    const int nx = grid_.size(0), ny = grid_.size(1);
    detail::ComplexVec bx, dbx, by, dby;
    basis(nx, x, bx, dbx);
    basis(ny, y, by, dby);
    detail::Complex v = 0.0, gx = 0.0, gy = 0.0;
    for (int ix = 0; ix < nx; ++ix) {
      detail::Complex s = 0.0, sy = 0.0;
      const detail::Complex* row = &coeff_[grid_.index(ix, 0)];
      for (int iy = 0; iy < ny; ++iy) {
        s += row[iy] * by[static_cast<std::size_t>(iy)];
        sy += row[iy] * dby[static_cast<std::size_t>(iy)];
      }
      v += bx[static_cast<std::size_t>(ix)] * s;
      gx += dbx[static_cast<std::size_t>(ix)] * s;
      gy += bx[static_cast<std::size_t>(ix)] * sy;
    }
    return {v.real(), {gx.real(), gy.real()}};
  }

  Grid grid_;
  detail::ComplexVec coeff_;
};

/// Periodic local Lagrange interpolant on an even stencil centred on the
/// cell containing the query point.
class LagrangeInterpolant {
 public:
  LagrangeInterpolant(const Grid& g, const Field& samples, int stencil)
      : grid_(g), samples_(samples), p_(stencil) {
    require_samples(g, samples);
    detail::require(stencil >= 4 && stencil % 2 == 0, "Lagrange stencil must be even and >= 4");
    for (int a = 0; a < g.dims(); ++a)
      detail::require(stencil <= g.size(a), "Lagrange stencil wider than the grid");
    // 1 / prod_{m != j} (j - m)
    denom_.resize(static_cast<std::size_t>(p_));
    for (int j = 0; j < p_; ++j) {
      double d = 1.0;
      for (int m = 0; m < p_; ++m)
        if (m != j) d *= static_cast<double>(j - m);
      denom_[static_cast<std::size_t>(j)] = 1.0 / d;
    }
  }

  ValueGrad eval(const Point& p) const {
    Axis ax = weights(p[0], 0);
    ValueGrad out;
    if (grid_.dims() == 1) {
      for (int j = 0; j < p_; ++j) {
        const double f = samples_[static_cast<Eigen::Index>(grid_.index(wrap_index(ax.start + j, 0)))];
        out.value += ax.l[static_cast<std::size_t>(j)] * f;
        out.grad[0] += ax.dl[static_cast<std::size_t>(j)] * f;
      }
      return out;
    }
    Axis ay = weights(p[1], 1);
    for (int a = 0; a < p_; ++a) {
      const int ix = wrap_index(ax.start + a, 0);
      double s = 0.0, sy = 0.0;
      for (int b = 0; b < p_; ++b) {
        const double f = samples_[static_cast<Eigen::Index>(grid_.index(ix, wrap_index(ay.start + b, 1)))];
        s += ay.l[static_cast<std::size_t>(b)] * f;
        sy += ay.dl[static_cast<std::size_t>(b)] * f;
      }
      out.value += ax.l[static_cast<std::size_t>(a)] * s;
      out.grad[0] += ax.dl[static_cast<std::size_t>(a)] * s;
      out.grad[1] += ax.l[static_cast<std::size_t>(a)] * sy;
    }
    return out;
  }

  double value(const Point& p) const { return eval(p).value; }

 private:
  struct Axis {
    int start = 0;
    std::vector<double> l, dl;
  };

  int wrap_index(int i, int axis) const {
    const int n = grid_.size(axis);
    return ((i % n) + n) % n;
  }

  Axis weights(double x, int axis) const {
    const double h = grid_.spacing(axis);
    const double s = wrap_2pi(x) / h;
    int cell = static_cast<int>(std::floor(s));
    if (cell >= grid_.size(axis)) cell = grid_.size(axis) - 1;
    Axis ax;
    ax.start = cell - p_ / 2 + 1;
    const double t = s - ax.start;  // local coordinate, nodes at 0..p-1
    const auto P = static_cast<std::size_t>(p_);
    std::vector<double> d(P), pre(P + 1), dpre(P + 1), suf(P + 1), dsuf(P + 1);
    for (std::size_t m = 0; m < P; ++m) d[m] = t - static_cast<double>(m);
    pre[0] = 1.0;
    dpre[0] = 0.0;
    for (std::size_t m = 0; m < P; ++m) {
      pre[m + 1] = pre[m] * d[m];
      dpre[m + 1] = dpre[m] * d[m] + pre[m];
    }
    suf[P] = 1.0;
    dsuf[P] = 0.0;
    for (std::size_t m = P; m-- > 0;) {
      suf[m] = suf[m + 1] * d[m];
      dsuf[m] = dsuf[m + 1] * d[m] + suf[m + 1];
    }
    ax.l.resize(P);
    ax.dl.resize(P);
    for (std::size_t j = 0; j < P; ++j) {
      ax.l[j] = denom_[j] * pre[j] * suf[j + 1];
      ax.dl[j] = denom_[j] * (dpre[j] * suf[j + 1] + pre[j] * dsuf[j + 1]) / h;
    }
    return ax;
  }

  Grid grid_;
  Field samples_;
  int p_;
  std::vector<double> denom_;
};

/// Either interpolant behind one interface.
class Interpolant {
 public:
  Interpolant(const Grid& g, const Field& samples, Interpolation how = {})
      : impl_(make(g, samples, how)) {}

  ValueGrad eval(const Point& p) const {
    return std::visit([&](const auto& i) { return i.eval(p); }, impl_);
  }
  double value(const Point& p) const { return eval(p).value; }

 private:
  using Impl = std::variant<TrigInterpolant, LagrangeInterpolant>;
  static Impl make(const Grid& g, const Field& s, Interpolation how) {
    if (how.scheme == InterpScheme::lagrange) return LagrangeInterpolant(g, s, how.stencil);
    return TrigInterpolant(g, s);
  }
  Impl impl_;
};

/// A set of query points, one coordinate array per axis.
using Points = std::vector<Field>;

inline Point point_at(const Points& pts, Eigen::Index i) {
  Point p{pts[0][i], 0.0};
  if (pts.size() > 1) p[1] = pts[1][i];
  return p;
}

inline void require_points(const Grid& g, const Points& pts) {
  detail::require(pts.size() == static_cast<std::size_t>(g.dims()),
                  "point set dimension does not match grid");
  for (const auto& a : pts) detail::require(a.size() == pts[0].size(), "ragged point set");
}

/// Values of the periodic interpolant of `samples` at `points`.
inline Field interpolate(const Grid& g, const Field& samples, const Points& points,
                         Interpolation how = {}) {
  require_points(g, points);
  Interpolant interp(g, samples, how);
  Field out(points[0].size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = interp.value(point_at(points, i));
  return out;
}

/// Matrix P with (P f)_i = interpolant of f at point i.
inline Eigen::MatrixXd interpolation_matrix(const Grid& g, const Points& points,
                                            Interpolation how = {}) {
  require_points(g, points);
  const auto N = static_cast<Eigen::Index>(g.num_nodes());
  Eigen::MatrixXd P(points[0].size(), N);
  Field unit = Field::Zero(N);
  for (Eigen::Index j = 0; j < N; ++j) {
    unit[j] = 1.0;
    P.col(j) = interpolate(g, unit, points, how);
    unit[j] = 0.0;
  }
  return P;
}

/// Default interpolation for flowing fields: trigonometric on S^1 and
/// small tori, 12-point Lagrange on tori with both sides >= 16.
inline Interpolation flow_interpolation(const Grid& g) {
  if (g.kind() == GridKind::torus && g.size(0) >= 16 && g.size(1) >= 16)
    return {InterpScheme::lagrange, 12};
  return {InterpScheme::trigonometric, 12};
}

}  // namespace frlab
