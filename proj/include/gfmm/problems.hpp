#pragma once

#include "gfmm/core.hpp"
#include "gfmm/rng.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace gfmm {

// ============================================================================
// Grids
// ============================================================================

// D interior nodes of [0, 1]: x_i = (i + 1) h with h = 1 / (D + 1).
template <typename S>
struct Grid1D {
  Index n = 0;

  S spacing() const { return S(1) / S(n + 1); }
  S coord(Index i) const { return spacing() * S(i + 1); }

  Vec<S> coords() const {
    Vec<S> x(n);
    for (Index i = 0; i < n; ++i) x[i] = coord(i);
    return x;
  }

  // Extended nodes 0..n+1 including both boundaries.
  Vec<S> coords_extended() const {
    Vec<S> x(n + 2);
    for (Index i = 0; i < n + 2; ++i) x[i] = spacing() * S(i);
    return x;
  }
};

template <typename S>
struct Grid2D {
  Index n = 0;  // interior nodes per side
  S spacing() const { return S(1) / S(n + 1); }
  S coord(Index i) const { return spacing() * S(i + 1); }
};

// ============================================================================
// Chebyshev basis
// ============================================================================

// Rows k = 1..kmax of T_k evaluated at xi = 2 x - 1 via the three-term
// recurrence.
template <typename S>
Mat<S> chebyshev_basis(Index kmax, const Vec<S>& x01) {
  require_config(kmax >= 1, "chebyshev basis size must be >= 1");
  const Index n = x01.size();
  Vec<S> xi = (S(2) * x01.array() - S(1)).matrix();
  Mat<S> t(kmax, n);
  Vec<S> tkm1 = Vec<S>::Ones(n);  // T_0
  Vec<S> tk = xi;                 // T_1
  t.row(0) = tk.transpose();
  for (Index k = 2; k <= kmax; ++k) {
    Vec<S> tkp1 = (S(2) * xi.array() * tk.array() - tkm1.array()).matrix();
    tkm1 = tk;
    tk = tkp1;
    t.row(k - 1) = tk.transpose();
  }
  return t;
}

// u_i = sum_k alpha_k T_k(xi_i), alpha indexed from k = 1.
template <typename S>
Vec<S> chebyshev_combination(const Vec<S>& alpha, const Grid1D<S>& grid) {
  auto t = chebyshev_basis<S>(alpha.size(), grid.coords());
  return t.transpose() * alpha;
}

// ============================================================================
// 1D Poisson: A = tridiag(-1, 2, -1), unscaled
// ============================================================================

template <typename S>
Vec<S> poisson_apply(const Vec<S>& u) {
  const Index n = u.size();
  Vec<S> c(n);
  for (Index i = 0; i < n; ++i) {
    S v = S(2) * u[i];
    if (i > 0) v -= u[i - 1];
    if (i + 1 < n) v -= u[i + 1];
    c[i] = v;
  }
  return c;
}

template <typename S>
S poisson_opnorm_closed_form(Index n) {
  return S(2) + S(2) * S(std::cos(3.14159265358979323846 / static_cast<double>(n + 1)));
}

// ============================================================================
// Thomas algorithm
// ============================================================================

// sub/sup are the full-length diagonals with sub[0] and sup[n-1] ignored.
template <typename S>
Vec<S> tridiag_solve(const Vec<S>& sub, const Vec<S>& diag, const Vec<S>& sup, const Vec<S>& rhs) {
  const Index n = diag.size();
  require(sub.size() == n && sup.size() == n && rhs.size() == n, "tridiag_solve: length mismatch");
  Vec<S> cp(n), dp(n);
  S piv = diag[0];
  if (piv == S(0)) throw numerical_error("tridiag_solve: zero pivot at row 0");
  cp[0] = sup[0] / piv;
  dp[0] = rhs[0] / piv;
  for (Index i = 1; i < n; ++i) {
    piv = diag[i] - sub[i] * cp[i - 1];
    if (piv == S(0)) throw numerical_error("tridiag_solve: zero pivot at row " + std::to_string(i));
    cp[i] = (i + 1 < n) ? sup[i] / piv : S(0);
    dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / piv;
  }
  Vec<S> u(n);
  u[n - 1] = dp[n - 1];
  for (Index i = n - 2; i >= 0; --i) u[i] = dp[i] - cp[i] * u[i + 1];
  return u;
}

template <typename S>
Vec<S> poisson_solve(const Vec<S>& c) {
  const Index n = c.size();
  return tridiag_solve<S>(Vec<S>::Constant(n, S(-1)), Vec<S>::Constant(n, S(2)), Vec<S>::Constant(n, S(-1)), c);
}

// ============================================================================
// 1D Darcy flow: -(a u')' = c with Dirichlet data folded into the operator
// ============================================================================

template <typename S>
struct DarcyOperator {
  Grid1D<S> grid;
  S u0 = S(0);
  S u1 = S(0);

  // Half-point coefficients a_{i+1/2}, i = 0..n, by arithmetic averaging of
  // nodal values on the extended grid (n + 2 values).
  static Vec<S> half_points(const Vec<S>& a_nodal_ext) {
    const Index n = a_nodal_ext.size() - 1;
    Vec<S> ah(n);
    for (Index i = 0; i < n; ++i) ah[i] = (a_nodal_ext[i] + a_nodal_ext[i + 1]) / S(2);
    return ah;
  }

  // c_i = [a_{i+1/2}(u_i - u_{i+1}) + a_{i-1/2}(u_i - u_{i-1})] / h^2 with
  // the Dirichlet values substituted at the first and last rows.
  Vec<S> apply(const Vec<S>& a_half, const Vec<S>& u) const {
    const Index n = grid.n;
    require(a_half.size() == n + 1, "darcy: a must have n+1 half-point values");
    require(u.size() == n, "darcy: u must live on the interior grid");
    for (Index i = 0; i <= n; ++i)
      if (!(a_half[i] > S(0))) throw std::domain_error("darcy: coefficient must be positive");
    const S inv_h2 = S(1) / (grid.spacing() * grid.spacing());
    Vec<S> c(n);
    for (Index i = 0; i < n; ++i) {
      const S u_left = (i == 0) ? u0 : u[i - 1];
      const S u_right = (i + 1 == n) ? u1 : u[i + 1];
      c[i] = (a_half[i + 1] * (u[i] - u_right) + a_half[i] * (u[i] - u_left)) * inv_h2;
    }
    return c;
  }

  // Tridiagonal solve of the same system; boundary data moves to the RHS.
  Vec<S> solve(const Vec<S>& a_half, const Vec<S>& c) const {
    const Index n = grid.n;
    require(a_half.size() == n + 1, "darcy: a must have n+1 half-point values");
    const S inv_h2 = S(1) / (grid.spacing() * grid.spacing());
    Vec<S> sub(n), diag(n), sup(n), rhs = c;
    for (Index i = 0; i < n; ++i) {
      diag[i] = (a_half[i] + a_half[i + 1]) * inv_h2;
      sub[i] = (i > 0) ? -a_half[i] * inv_h2 : S(0);
      sup[i] = (i + 1 < n) ? -a_half[i + 1] * inv_h2 : S(0);
    }
    rhs[0] += a_half[0] * u0 * inv_h2;
    rhs[n - 1] += a_half[n] * u1 * inv_h2;
    return tridiag_solve(sub, diag, sup, rhs);
  }
};

// ============================================================================
// Gaussian process sampling
// ============================================================================

// Cholesky factor of K + jitter I with jitter escalating 1e-10 -> 1e-6.
inline Eigen::MatrixXd gp_cholesky(const Eigen::MatrixXd& kernel) {
  for (double jitter = 1e-10; jitter <= 1.0000001e-6; jitter *= 10.0) {
    Eigen::MatrixXd k = kernel;
    k.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw numerical_error("gp_cholesky: factorization failed after jitter escalation");
}

inline Eigen::VectorXd gp_sample(const Eigen::MatrixXd& chol_l, SeededRng& rng) {
  Eigen::VectorXd z(chol_l.rows());
  for (Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return chol_l * z;
}

// ============================================================================
// Darcy coefficient distribution: mixture of a quadratic parametric form and
// a shifted log-normal Gaussian-process draw
// ============================================================================

enum class MixtureMode { mixture, average };
enum class KernelUnits { index, coordinate };
enum class CoeffDist { mixture, quadratic, lognormal };

template <typename S>
class DarcyCoefficientSampler {
 public:
  DarcyCoefficientSampler() = default;
  DarcyCoefficientSampler(Grid1D<S> grid, MixtureMode mode = MixtureMode::mixture,
                          KernelUnits units = KernelUnits::index)
      : grid_(grid), mode_(mode), units_(units) {
    const Index m = grid_.n + 2;  // extended nodes
    Eigen::MatrixXd k(m, m);
    // Squared-exponential kernel with length scale 0.1 D, measured in grid
    // index units by default (0.1 in x units under the coordinate option).
    const double len = units_ == KernelUnits::index ? 0.1 * static_cast<double>(grid_.n)
                                                    : 0.1 / static_cast<double>(grid_.spacing());
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j) {
        const double d = static_cast<double>(i - j);
        k(i, j) = std::exp(-d * d / (2.0 * len * len));
      }
    chol_ = gp_cholesky(k);
  }

  // Nodal coefficient on the extended grid (n + 2 values). Metadata records
  // the branch taken and the quadratic parameter.
  Vec<S> sample(SeededRng& rng, CoeffDist dist, std::map<std::string, double>* meta = nullptr) const {
    const Index m = grid_.n + 2;
    const Vec<S> x = grid_.coords_extended();
    bool quad = false, logn = false;
    switch (dist) {
      case CoeffDist::quadratic: quad = true; break;
      case CoeffDist::lognormal: logn = true; break;
      case CoeffDist::mixture:
        if (mode_ == MixtureMode::average) {
          quad = logn = true;
        } else {
          (rng.uniform() < 0.5 ? quad : logn) = true;
        }
        break;
    }
    Vec<S> a1 = Vec<S>::Zero(m), a2 = Vec<S>::Zero(m);
    double theta1 = 0.0;
    if (quad) {
      theta1 = rng.uniform(0.0, 1.0);
      a1 = (S(1) + S(theta1) * x.array().square()).matrix();
    }
    if (logn) {
      Eigen::VectorXd th = gp_sample(chol_, rng);
      for (Index i = 0; i < m; ++i) a2[i] = S(0.1) + S(std::exp(th[i]));
    }
    Vec<S> a;
    if (quad && logn)
      a = S(0.5) * a1 + S(0.5) * a2;
    else
      a = quad ? a1 : a2;
    if (meta) {
      (*meta)["branch"] = quad && logn ? 2.0 : (quad ? 0.0 : 1.0);
      if (quad) (*meta)["theta1"] = theta1;
    }
    return a;
  }

 private:
  Grid1D<S> grid_;
  MixtureMode mode_ = MixtureMode::mixture;
  KernelUnits units_ = KernelUnits::index;
  Eigen::MatrixXd chol_;
};

// ============================================================================
// Nonlinear first-order BVP: a u' + b |u| = c with integral boundary datum
// ============================================================================

template <typename S>
struct BvpOperator {
  Grid1D<S> grid;

  // Centered second-order derivative on the interior, one-sided
  // second-order at the two end points (exact on affine functions).
  Vec<S> derivative(const Vec<S>& u) const {
    const Index n = grid.n;
    require(u.size() == n && n >= 3, "bvp derivative: need at least 3 grid points");
    const S inv_2h = S(1) / (S(2) * grid.spacing());
    Vec<S> d(n);
    d[0] = (S(-3) * u[0] + S(4) * u[1] - u[2]) * inv_2h;
    for (Index i = 1; i + 1 < n; ++i) d[i] = (u[i + 1] - u[i - 1]) * inv_2h;
    d[n - 1] = (S(3) * u[n - 1] - S(4) * u[n - 2] + u[n - 3]) * inv_2h;
    return d;
  }

  // c = a u' + b |u|.
  Vec<S> apply_interior(const Vec<S>& a, const Vec<S>& b, const Vec<S>& u) const {
    require(a.size() == grid.n && b.size() == grid.n && u.size() == grid.n, "bvp: field length mismatch");
    return (a.array() * derivative(u).array() + b.array() * u.array().abs()).matrix();
  }

  // Trapezoid of f u over [0, 1]; the unknown end values are linearly
  // extrapolated from the two nearest interior nodes.
  S boundary_apply(const Vec<S>& f, const Vec<S>& u) const {
    const Index n = grid.n;
    require(f.size() == n && u.size() == n && n >= 2, "bvp boundary: field length mismatch");
    Vec<S> v = f.cwiseProduct(u);
    const S v_left = S(2) * v[0] - v[1];
    const S v_right = S(2) * v[n - 1] - v[n - 2];
    const S h = grid.spacing();
    S acc = (v_left + v[0]) / S(2) + (v[n - 1] + v_right) / S(2);
    for (Index i = 0; i + 1 < n; ++i) acc += (v[i] + v[i + 1]) / S(2);
    return acc * h;
  }

  Vec<S> interior_residual(const Vec<S>& a, const Vec<S>& b, const Vec<S>& u, const Vec<S>& c) const {
    return apply_interior(a, b, u) - c;
  }

  S boundary_residual(const Vec<S>& f, const Vec<S>& u, S g) const { return g - boundary_apply(f, u); }
};

enum class BvpDist { train, unit_normal };

// a = 1 + theta x^2; b, f are 4-term Chebyshev combinations. Under the
// training distribution theta, phi_i, eta_i ~ U[-1, 1]; the out-of-training
// option draws them from a unit normal instead.
template <typename S>
struct BvpCoefficientSampler {
  Grid1D<S> grid;

  struct Fields {
    Vec<S> a, b, f;
  };

  Fields sample(SeededRng& rng, BvpDist dist, std::map<std::string, double>* meta = nullptr) const {
    auto draw = [&]() { return dist == BvpDist::train ? rng.uniform(-1.0, 1.0) : rng.normal(); };
    const double theta = draw();
    Vec<S> phi(4), eta(4);
    for (Index i = 0; i < 4; ++i) phi[i] = S(draw());
    for (Index i = 0; i < 4; ++i) eta[i] = S(draw());
    Fields out;
    const Vec<S> x = grid.coords();
    out.a = (S(1) + S(theta) * x.array().square()).matrix();
    out.b = chebyshev_combination(phi, grid);
    out.f = chebyshev_combination(eta, grid);
    if (meta) (*meta)["theta"] = theta;
    return out;
  }
};

// ============================================================================
// 2D Poisson: 5-point stencil with a zero-Dirichlet halo
// ============================================================================

template <typename S>
Mat<S> poisson2d_apply(const Mat<S>& u) {
  const Index n = u.rows();
  require(u.cols() == n, "poisson2d: grid must be square");
  Mat<S> c(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      S v = S(4) * u(i, j);
      if (i > 0) v -= u(i - 1, j);
      if (i + 1 < n) v -= u(i + 1, j);
      if (j > 0) v -= u(i, j - 1);
      if (j + 1 < n) v -= u(i, j + 1);
      c(i, j) = v;
    }
  return c;
}

// Solves A2 U = C through the eigendecomposition of the 1D operator
// (A2 = A (x) I + I (x) A shares the eigenvectors of A).
class Poisson2dSolver {
 public:
  explicit Poisson2dSolver(Index n) : n_(n) {
    v_.resize(n, n);
    lambda_.resize(n);
    const double scale = std::sqrt(2.0 / static_cast<double>(n + 1));
    for (Index k = 0; k < n; ++k) {
      lambda_[k] = 2.0 - 2.0 * std::cos(3.14159265358979323846 * static_cast<double>(k + 1) /
                                        static_cast<double>(n + 1));
      for (Index i = 0; i < n; ++i)
        v_(i, k) = scale * std::sin(3.14159265358979323846 * static_cast<double>((i + 1) * (k + 1)) /
                                    static_cast<double>(n + 1));
    }
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& c) const {
    Eigen::MatrixXd w = v_.transpose() * c * v_;
    for (Index i = 0; i < n_; ++i)
      for (Index j = 0; j < n_; ++j) w(i, j) /= lambda_[i] + lambda_[j];
    return v_ * w * v_.transpose();
  }

 private:
  Index n_;
  Eigen::MatrixXd v_;
  Eigen::VectorXd lambda_;
};

// u(x, y) = sum_{k,m} alpha_{k,m} T_k(xi) T_m(eta), k and m from 1.
template <typename S>
Mat<S> chebyshev2d_combination(const Mat<S>& alpha, const Grid2D<S>& grid) {
  Grid1D<S> g1{grid.n};
  auto t = chebyshev_basis<S>(alpha.rows(), g1.coords());  // [K, n]
  require(alpha.cols() == alpha.rows(), "chebyshev2d: coefficient matrix must be square");
  return t.transpose() * alpha * t;
}

}  // namespace gfmm
