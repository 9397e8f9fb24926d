#pragma once

#include "gfmm/datagen.hpp"

#include <cmath>
#include <functional>
#include <optional>

namespace gfmm {

// Relative solution error |u_hat - u| / |u| (2-norms).
template <typename S>
double eps_rel(const Vec<S>& u_hat, const Vec<S>& u) {
  require(u_hat.size() == u.size(), "eps_rel: length mismatch");
  const double nu = u.template cast<double>().norm();
  if (nu == 0.0) throw numerical_error("eps_rel: reference solution has zero norm");
  return (u_hat.template cast<double>() - u.template cast<double>()).norm() / nu;
}

// Normalized backward error |A u_hat - c| / (|A| |u_hat| + |c|).
template <typename S>
double eps_be(const std::function<Vec<S>(const Vec<S>&)>& apply_a, double norm_a, const Vec<S>& u_hat,
              const Vec<S>& c) {
  if (!(norm_a > 0.0)) throw numerical_error("eps_be: operator norm must be positive");
  const double num = (apply_a(u_hat).template cast<double>() - c.template cast<double>()).norm();
  const double den = norm_a * u_hat.template cast<double>().norm() + c.template cast<double>().norm();
  if (den == 0.0) throw numerical_error("eps_be: zero denominator");
  return num / den;
}

// 2-norm of a linear operator by power iteration on A^T A. Convergence is
// judged with an Aitken-style estimate of the remaining error, so `tol` is a
// relative tolerance on the returned value rather than on the step size.
inline double matrix_2norm(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                           const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply_t, Index dim,
                           double tol = 1e-6, Index max_iters = 2000000) {
  SeededRng rng(0x2a2a2a);
  Eigen::VectorXd v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = rng.normal();
  v.normalize();
  double lambda_prev = 0.0, delta_prev = 0.0;
  for (Index it = 0; it < max_iters; ++it) {
    Eigen::VectorXd w = apply_t(apply(v));
    const double lambda = v.dot(w);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    const double delta = std::abs(lambda - lambda_prev);
    if (it > 2 && delta_prev > 0.0 && lambda > 0.0) {
      const double r = delta / delta_prev;
      const double remaining = (r < 1.0) ? delta * r / (1.0 - r) : delta;
      if ((remaining + delta) / lambda < tol) return std::sqrt(lambda);
    }
    if (it > 2 && delta == 0.0) return std::sqrt(lambda);
    lambda_prev = lambda;
    delta_prev = delta;
  }
  throw numerical_error("matrix_2norm: power iteration did not converge");
}

// Symmetric-operator convenience.
inline double matrix_2norm_sym(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply, Index dim,
                               double tol = 1e-6) {
  return matrix_2norm(apply, apply, dim, tol);
}

// ============================================================================
// Per-problem residual metrics
// ============================================================================

struct SampleMetrics {
  std::optional<double> rel;
  std::optional<double> be;
  std::optional<double> res_int;
  std::optional<double> res_bnd;
};

// Cached problem norms for the backward error (constant-operator cases only).
template <typename S>
std::optional<double> problem_operator_norm(const Problem<S>& p) {
  if (std::holds_alternative<PoissonProblem<S>>(p)) {
    const Index n = std::get<PoissonProblem<S>>(p).grid.n;
    return matrix_2norm_sym([](const Eigen::VectorXd& v) { return poisson_apply<double>(v); }, n);
  }
  if (std::holds_alternative<Poisson2DProblem<S>>(p)) {
    const Index n = std::get<Poisson2DProblem<S>>(p).grid.n;
    auto apply = [n](const Eigen::VectorXd& v) {
      Eigen::MatrixXd u = Eigen::Map<const Eigen::MatrixXd>(v.data(), n, n);
      Eigen::MatrixXd c = poisson2d_apply<double>(u);
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(c.data(), c.size()));
    };
    return matrix_2norm_sym(apply, n * n);
  }
  return std::nullopt;
}

// Evaluates every metric the sample supports for one prediction.
template <typename S>
SampleMetrics evaluate_sample(const Problem<S>& p, const Sample<S>& s, const Vec<S>& u_hat,
                              const std::optional<double>& norm_a) {
  SampleMetrics m;
  if (s.target) m.rel = eps_rel(u_hat, *s.target);

  std::visit(
      [&](const auto& prob) {
        using T = std::decay_t<decltype(prob)>;
        if constexpr (std::is_same_v<T, PoissonProblem<S>>) {
          const auto& c = s.fields.at("c");
          Vec<S> r = poisson_apply(u_hat) - c;
          m.res_int = r.template cast<double>().norm();
          if (norm_a)
            m.be = eps_be<S>([](const Vec<S>& v) { return poisson_apply(v); }, *norm_a, u_hat, c);
        } else if constexpr (std::is_same_v<T, DarcyProblem<S>>) {
          const auto& c = s.fields.at("c");
          Vec<S> r = prob.op.apply(s.fields.at("a_half"), u_hat) - c;
          m.res_int = r.template cast<double>().norm();
        } else if constexpr (std::is_same_v<T, NonlinearBVPProblem<S>>) {
          const auto& c = s.fields.at("c");
          Vec<S> r = prob.op.interior_residual(s.fields.at("a"), s.fields.at("b"), u_hat, c);
          m.res_int = r.template cast<double>().norm();
          m.res_bnd = std::abs(static_cast<double>(
              prob.op.boundary_residual(s.fields.at("f"), u_hat, s.fields.at("g")[0])));
        } else if constexpr (std::is_same_v<T, Poisson2DProblem<S>>) {
          const Index n = prob.grid.n;
          const auto& c = s.fields.at("c");
          Mat<S> uh = ConstMatMap<S>(u_hat.data(), n, n);
          Mat<S> au = poisson2d_apply(uh);
          Vec<S> r = ConstVecMap<S>(au.data(), au.size()) - c;
          m.res_int = r.template cast<double>().norm();
          if (norm_a) {
            auto apply = [n](const Vec<S>& v) {
              Mat<S> u = ConstMatMap<S>(v.data(), n, n);
              Mat<S> cc = poisson2d_apply(u);
              return Vec<S>(ConstVecMap<S>(cc.data(), cc.size()));
            };
            m.be = eps_be<S>(apply, *norm_a, u_hat, c);
          }
        }
      },
      p);
  return m;
}

// Mean metrics over a batch of (sample, prediction) pairs.
struct BatchMetrics {
  std::optional<double> rel, be, res_int, res_bnd;
  Index count = 0;
};

template <typename S>
BatchMetrics aggregate_metrics(const Problem<S>& p, const Batch<S>& batch, const std::vector<Vec<S>>& preds,
                               const std::optional<double>& norm_a) {
  require(batch.size() == preds.size(), "aggregate_metrics: prediction count mismatch");
  BatchMetrics out;
  double rel = 0, be = 0, ri = 0, rb = 0;
  Index n_rel = 0, n_be = 0, n_ri = 0, n_rb = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto m = evaluate_sample(p, batch[i], preds[i], norm_a);
    if (m.rel) rel += *m.rel, ++n_rel;
    if (m.be) be += *m.be, ++n_be;
    if (m.res_int) ri += *m.res_int, ++n_ri;
    if (m.res_bnd) rb += *m.res_bnd, ++n_rb;
  }
  out.count = static_cast<Index>(batch.size());
  if (n_rel) out.rel = rel / static_cast<double>(n_rel);
  if (n_be) out.be = be / static_cast<double>(n_be);
  if (n_ri) out.res_int = ri / static_cast<double>(n_ri);
  if (n_rb) out.res_bnd = rb / static_cast<double>(n_rb);
  return out;
}

}  // namespace gfmm
