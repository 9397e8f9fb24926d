#pragma once

#include "gfmm/problems.hpp"

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gfmm {

// ============================================================================
// Samples and sampling schemes
// ============================================================================

// One training/evaluation example. All named fields share the problem grid
// (scalars such as the boundary datum g are stored with length 1 and
// broadcast by the model input builder). 2D fields are stored flattened.
template <typename S>
struct Sample {
  std::map<std::string, Vec<S>> fields;
  std::optional<Vec<S>> target;  // ground-truth u where available
  bool residual_only = false;
  std::map<std::string, double> meta;
};

template <typename S>
using Batch = std::vector<Sample<S>>;

enum class SchemeKind { solution, rhs };
enum class BasisMode { single_basis, combination };

struct SamplingScheme {
  SchemeKind kind = SchemeKind::solution;
  int basis_size = 16;
  BasisMode mode = BasisMode::single_basis;

  void validate() const { require_config(basis_size >= 1, "sampling scheme: basis size must be >= 1"); }
};

// ============================================================================
// Benchmark problems
// ============================================================================

template <typename S>
struct PoissonProblem {
  Grid1D<S> grid;
};

template <typename S>
struct DarcyProblem {
  DarcyOperator<S> op;
  std::shared_ptr<const DarcyCoefficientSampler<S>> coeff;
  CoeffDist dist = CoeffDist::mixture;
};

template <typename S>
struct NonlinearBVPProblem {
  BvpOperator<S> op;
  BvpDist dist = BvpDist::train;
};

template <typename S>
struct Poisson2DProblem {
  Grid2D<S> grid;
  std::shared_ptr<const Poisson2dSolver> solver;
};

template <typename S>
using Problem = std::variant<PoissonProblem<S>, DarcyProblem<S>, NonlinearBVPProblem<S>, Poisson2DProblem<S>>;

template <typename S>
Index problem_grid_size(const Problem<S>& p) {
  return std::visit(
      [](const auto& prob) -> Index {
        using T = std::decay_t<decltype(prob)>;
        if constexpr (std::is_same_v<T, PoissonProblem<S>>) return prob.grid.n;
        else if constexpr (std::is_same_v<T, DarcyProblem<S>>) return prob.op.grid.n;
        else if constexpr (std::is_same_v<T, NonlinearBVPProblem<S>>) return prob.op.grid.n;
        else return prob.grid.n * prob.grid.n;
      },
      p);
}

// ============================================================================
// Basis draws
// ============================================================================

template <typename S>
Vec<S> draw_basis_coeffs(const SamplingScheme& scheme, SeededRng& rng, std::map<std::string, double>* meta,
                         const char* tag) {
  Vec<S> alpha = Vec<S>::Zero(scheme.basis_size);
  if (scheme.mode == BasisMode::single_basis) {
    const auto k = rng.below(static_cast<std::uint64_t>(scheme.basis_size));
    const double a = rng.uniform(-1.0, 1.0);
    alpha[static_cast<Index>(k)] = S(a);
    if (meta) {
      (*meta)[std::string(tag) + "_mode"] = static_cast<double>(k + 1);
      (*meta)[std::string(tag) + "_alpha"] = a;
    }
  } else {
    for (Index i = 0; i < alpha.size(); ++i) alpha[i] = S(rng.uniform(-1.0, 1.0));
  }
  return alpha;
}

template <typename To, typename From>
Vec<To> cast_vec(const Vec<From>& v) {
  return v.template cast<To>();
}

// ============================================================================
// Solution sampling: draw u, apply the discrete forward operator
// ============================================================================

template <typename S>
Sample<S> solution_sample(const PoissonProblem<S>& p, const SamplingScheme& scheme, SeededRng& rng) {
  Sample<S> s;
  const Vec<S> alpha = draw_basis_coeffs<S>(scheme, rng, &s.meta, "u");
  Vec<S> u = chebyshev_combination(alpha, p.grid);
  s.fields["c"] = poisson_apply(u);
  s.target = std::move(u);
  return s;
}

template <typename S>
Sample<S> solution_sample(const DarcyProblem<S>& p, const SamplingScheme& scheme, SeededRng& rng) {
  Sample<S> s;
  const Vec<S> a_ext = p.coeff->sample(rng, p.dist, &s.meta);
  const Vec<S> a_half = DarcyOperator<S>::half_points(a_ext);
  const Vec<S> alpha = draw_basis_coeffs<S>(scheme, rng, &s.meta, "u");
  Vec<S> u = chebyshev_combination(alpha, p.op.grid);
  s.fields["c"] = p.op.apply(a_half, u);
  s.fields["a"] = a_ext.segment(1, p.op.grid.n);
  s.fields["a_half"] = a_half;
  s.target = std::move(u);
  return s;
}

template <typename S>
Sample<S> solution_sample(const NonlinearBVPProblem<S>& p, const SamplingScheme& scheme, SeededRng& rng) {
  Sample<S> s;
  auto coeffs = BvpCoefficientSampler<S>{p.op.grid}.sample(rng, p.dist, &s.meta);
  const Vec<S> alpha = draw_basis_coeffs<S>(scheme, rng, &s.meta, "u");
  Vec<S> u = chebyshev_combination(alpha, p.op.grid);
  s.fields["c"] = p.op.apply_interior(coeffs.a, coeffs.b, u);
  const S g = p.op.boundary_apply(coeffs.f, u);
  s.fields["g"] = Vec<S>::Constant(1, g);
  s.fields["a"] = std::move(coeffs.a);
  s.fields["b"] = std::move(coeffs.b);
  s.fields["f"] = std::move(coeffs.f);
  s.meta["g"] = static_cast<double>(g);
  s.target = std::move(u);
  return s;
}

template <typename S>
Sample<S> solution_sample(const Poisson2DProblem<S>& p, const SamplingScheme& scheme, SeededRng& rng) {
  Sample<S> s;
  Mat<S> alpha(scheme.basis_size, scheme.basis_size);
  for (Index i = 0; i < alpha.size(); ++i) alpha.data()[i] = S(rng.uniform(-1.0, 1.0));
  Mat<S> u = chebyshev2d_combination(alpha, p.grid);
  Mat<S> c = poisson2d_apply(u);
  s.fields["c"] = ConstVecMap<S>(c.data(), c.size());
  s.target = Vec<S>(ConstVecMap<S>(u.data(), u.size()));
  return s;
}

// ============================================================================
// RHS sampling: draw c, recover u with a classical solver where one exists
// ============================================================================

template <typename S>
Sample<S> rhs_sample(const PoissonProblem<S>& p, const SamplingScheme& scheme, SeededRng& rng) {
  Sample<S> s;
  const Vec<S> phi = draw_basis_coeffs<S>(scheme, rng, &s.meta, "c");
  Vec<S> c = chebyshev_combination(phi, p.grid);
  s.target = cast_vec<S>(poisson_solve(cast_vec<double>(c)));
  s.fields["c"] = std::move(c);
  return s;
}

template <typename S>
Sample<S> rhs_sample(const DarcyProblem<S>& p, const SamplingScheme& scheme, SeededRng& rng) {
  Sample<S> s;
  const Vec<S> a_ext = p.coeff->sample(rng, p.dist, &s.meta);
  const Vec<S> a_half = DarcyOperator<S>::half_points(a_ext);
  const Vec<S> phi = draw_basis_coeffs<S>(scheme, rng, &s.meta, "c");
  Vec<S> c = chebyshev_combination(phi, p.op.grid);
  DarcyOperator<double> op64{Grid1D<double>{p.op.grid.n}, static_cast<double>(p.op.u0),
                             static_cast<double>(p.op.u1)};
  s.target = cast_vec<S>(op64.solve(cast_vec<double>(a_half), cast_vec<double>(c)));
  s.fields["a"] = a_ext.segment(1, p.op.grid.n);
  s.fields["a_half"] = a_half;
  s.fields["c"] = std::move(c);
  return s;
}

// No classical solver for the nonlinear problem; the sample carries no
// target and is evaluated by residual only.
template <typename S>
Sample<S> rhs_sample(const NonlinearBVPProblem<S>& p, const SamplingScheme& scheme, SeededRng& rng) {
  Sample<S> s;
  auto coeffs = BvpCoefficientSampler<S>{p.op.grid}.sample(rng, p.dist, &s.meta);
  const Vec<S> phi = draw_basis_coeffs<S>(scheme, rng, &s.meta, "c");
  Vec<S> c = chebyshev_combination(phi, p.op.grid);
  const S g = S(rng.uniform(-1.0, 1.0));
  s.fields["c"] = std::move(c);
  s.fields["g"] = Vec<S>::Constant(1, g);
  s.fields["a"] = std::move(coeffs.a);
  s.fields["b"] = std::move(coeffs.b);
  s.fields["f"] = std::move(coeffs.f);
  s.meta["g"] = static_cast<double>(g);
  s.residual_only = true;
  return s;
}

template <typename S>
Sample<S> rhs_sample(const Poisson2DProblem<S>& p, const SamplingScheme& scheme, SeededRng& rng) {
  Sample<S> s;
  Mat<S> phi(scheme.basis_size, scheme.basis_size);
  for (Index i = 0; i < phi.size(); ++i) phi.data()[i] = S(rng.uniform(-1.0, 1.0));
  Mat<S> c = chebyshev2d_combination(phi, p.grid);
  Eigen::MatrixXd u = p.solver->solve(c.template cast<double>());
  s.fields["c"] = ConstVecMap<S>(c.data(), c.size());
  s.target = Vec<S>(Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(u.data(), u.size())).cast<S>());
  return s;
}

// ============================================================================
// Batches
// ============================================================================

template <typename S>
Sample<S> draw_sample(const Problem<S>& p, const SamplingScheme& scheme, SeededRng& rng) {
  scheme.validate();
  return std::visit(
      [&](const auto& prob) {
        if (scheme.kind == SchemeKind::solution) return solution_sample(prob, scheme, rng);
        return rhs_sample(prob, scheme, rng);
      },
      p);
}

// n independent samples. Per-sample streams are derived from one nonce drawn
// off the caller's rng, so results are ordered by sample index and invariant
// to how generation is parallelized.
template <typename S>
Batch<S> make_batch(const Problem<S>& p, const SamplingScheme& scheme, Index n, SeededRng& rng) {
  require_config(n >= 1, "make_batch: n must be >= 1");
  const std::uint64_t nonce = rng.next_u64();
  Batch<S> batch(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    SeededRng child(SeededRng::derive_seed(nonce, static_cast<std::uint64_t>(i)));
    batch[static_cast<std::size_t>(i)] = draw_sample(p, scheme, child);
  }
  return batch;
}

// Fixed-seed evaluation set, reproducible independently of training state.
template <typename S>
Batch<S> make_validation_set(const Problem<S>& p, const SamplingScheme& scheme, Index n, std::uint64_t seed) {
  SeededRng rng(seed);
  return make_batch(p, scheme, n, rng);
}

}  // namespace gfmm
