#include <doctest.h>

#include "gfmm/metrics.hpp"
#include "gfmm/tape.hpp"

#include <cmath>

using namespace gfmm;

TEST_CASE("mse loss") {
  auto u = make_vector<double>((Vec<double>(2) << 1, 3).finished());
  auto same = make_vector<double>((Vec<double>(2) << 1, 3).finished());
  CHECK(mse_loss<double>(nullptr, same, u)->values()[0] == 0);

  auto plus1 = make_vector<double>((Vec<double>(2) << 2, 4).finished());
  CHECK(mse_loss<double>(nullptr, plus1, u)->values()[0] == doctest::Approx(1.0));

  auto zero = make_vector<double>(Vec<double>::Zero(2));
  CHECK(mse_loss<double>(nullptr, zero, u)->values()[0] == doctest::Approx(5.0));  // (1 + 9) / 2

  auto bad = make_vector<double>(Vec<double>::Zero(3));
  CHECK_THROWS_AS(mse_loss<double>(nullptr, bad, u), dimension_error);
}

TEST_CASE("eps_rel: ratios and scale invariance") {
  Vec<double> u(3);
  u << 1, -2, 2;
  CHECK(eps_rel<double>(u, u) == 0);
  CHECK(eps_rel<double>(Vec<double>(2 * u), u) == doctest::Approx(1.0));
  CHECK(eps_rel<double>(Vec<double>(Vec<double>::Zero(3)), u) == doctest::Approx(1.0));
  CHECK_THROWS_AS(eps_rel<double>(u, Vec<double>(Vec<double>::Zero(3))), numerical_error);

  SeededRng rng(91);
  Vec<double> uh(3);
  for (Index i = 0; i < 3; ++i) uh[i] = rng.uniform(-1, 1);
  const double s = 3.7;
  CHECK(std::abs(eps_rel<double>(uh, u) - eps_rel<double>(Vec<double>(s * uh), Vec<double>(s * u))) <= 1e-12);
}

TEST_CASE("eps_be: exact solve, zero prediction, dense-formula oracle") {
  const Index n = 32;
  auto apply = [](const Vec<double>& v) { return poisson_apply(v); };
  const double norm_a = matrix_2norm_sym([](const Eigen::VectorXd& v) { return poisson_apply<double>(v); }, n);

  SeededRng rng(92);
  Vec<double> u(n);
  for (Index i = 0; i < n; ++i) u[i] = rng.uniform(-1, 1);
  Vec<double> c = poisson_apply(u);
  Vec<double> u_solved = poisson_solve(c);
  CHECK(eps_be<double>(apply, norm_a, u_solved, c) <= 1e-12);

  CHECK(eps_be<double>(apply, norm_a, Vec<double>(Vec<double>::Zero(n)), c) == doctest::Approx(1.0));

  // Dense recomputation of the formula.
  Vec<double> uh(n);
  for (Index i = 0; i < n; ++i) uh[i] = rng.uniform(-1, 1);
  const double expect = (poisson_apply(uh) - c).norm() / (norm_a * uh.norm() + c.norm());
  CHECK(eps_be<double>(apply, norm_a, uh, c) == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(eps_be<double>(apply, 0.0, uh, c), numerical_error);
}

TEST_CASE("matrix_2norm: identity, diagonal, tridiagonal closed form") {
  CHECK(matrix_2norm_sym([](const Eigen::VectorXd& v) { return v; }, 5) == doctest::Approx(1.0));

  auto diag = [](const Eigen::VectorXd& v) {
    Eigen::VectorXd w = v;
    w[0] *= 3.0;
    return w;
  };
  CHECK(matrix_2norm_sym(diag, 2) == doctest::Approx(3.0).epsilon(1e-6));

  const Index n = 256;
  const double pi = 3.14159265358979323846;
  const double closed = 2.0 + 2.0 * std::cos(pi / double(n + 1));
  const double powered = matrix_2norm_sym([](const Eigen::VectorXd& v) { return poisson_apply<double>(v); }, n);
  CHECK(std::abs(powered - closed) / closed <= 1e-4);
  CHECK(closed == doctest::Approx(3.9998506).epsilon(1e-6));
}

TEST_CASE("residual metrics per problem") {
  // Zero prediction: interior residual |c|, boundary residual |g|.
  NonlinearBVPProblem<double> p{BvpOperator<double>{Grid1D<double>{32}}};
  SamplingScheme scheme;
  scheme.mode = BasisMode::combination;
  SeededRng rng(93);
  auto s = solution_sample(p, scheme, rng);

  Problem<double> prob = p;
  auto own = evaluate_sample(prob, s, *s.target, std::nullopt);
  REQUIRE(own.res_int.has_value());
  REQUIRE(own.res_bnd.has_value());
  CHECK(*own.res_int == 0);
  CHECK(*own.res_bnd == 0);
  CHECK(*own.rel == 0);

  auto zero = evaluate_sample(prob, s, Vec<double>(Vec<double>::Zero(32)), std::nullopt);
  CHECK(*zero.res_int == doctest::Approx(s.fields.at("c").norm()));
  // With u == 0 the boundary functional integrates to zero, leaving |g|.
  CHECK(*zero.res_bnd == doctest::Approx(std::abs(s.meta.at("g"))));

  // Random prediction: matches independent recomputation from raw fields.
  Vec<double> uh(32);
  for (Index i = 0; i < 32; ++i) uh[i] = rng.uniform(-1, 1);
  auto m = evaluate_sample(prob, s, uh, std::nullopt);
  const Vec<double> r =
      p.op.interior_residual(s.fields.at("a"), s.fields.at("b"), uh, s.fields.at("c"));
  CHECK(*m.res_int == doctest::Approx(r.norm()).epsilon(1e-12));
  CHECK(*m.res_bnd ==
        doctest::Approx(std::abs(p.op.boundary_residual(s.fields.at("f"), uh, s.fields.at("g")[0]))).epsilon(1e-12));
}

TEST_CASE("metric aggregation over a batch") {
  PoissonProblem<double> p{Grid1D<double>{16}};
  Problem<double> prob = p;
  SamplingScheme scheme;
  SeededRng rng(94);
  auto batch = make_batch(prob, scheme, 8, rng);
  std::vector<Vec<double>> preds;
  for (const auto& s : batch) preds.push_back(*s.target);
  auto norm_a = problem_operator_norm(prob);
  REQUIRE(norm_a.has_value());
  auto m = aggregate_metrics(prob, batch, preds, norm_a);
  CHECK(m.count == 8);
  CHECK(*m.rel == 0);
  CHECK(*m.be <= 1e-12);
  CHECK(*m.res_int <= 1e-12);
  CHECK_FALSE(m.res_bnd.has_value());
}
