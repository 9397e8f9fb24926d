#include <doctest.h>

#include "gfmm/adam.hpp"
#include "gfmm/gradcheck.hpp"
#include "gfmm/rng.hpp"
#include "gfmm/tape.hpp"

#include <cmath>

using namespace gfmm;

namespace {

TensorPtr<double> rand_tensor(std::vector<Index> shape, SeededRng& rng, double lo = -1, double hi = 1) {
  auto t = make_tensor<double>(std::move(shape));
  for (Index i = 0; i < t->numel(); ++i) t->values()[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  auto t = make_tensor<double>({2, 3});
  CHECK(t->numel() == 6);
  CHECK(t->rank() == 2);
  CHECK_THROWS_AS(make_tensor<double>({2, 3}, Vec<double>::Zero(5)), dimension_error);
  CHECK_FALSE(t->has_grad());
  t->grad();
  CHECK(t->has_grad());
  CHECK(t->grad().size() == 6);
}

TEST_CASE("matvec basics") {
  auto w = make_matrix<double>((Mat<double>(2, 2) << 1, 0, 0, 1).finished());
  auto y = make_vector<double>((Vec<double>(2) << 3, -1).finished());
  CHECK(ops::matvec<double>(nullptr, w, y)->values()[0] == 3);
  CHECK(ops::matvec<double>(nullptr, w, y)->values()[1] == -1);

  auto zero = make_tensor<double>({2, 2});
  auto z = ops::matvec<double>(nullptr, zero, y);
  CHECK(z->values().norm() == 0);

  auto w2 = make_matrix<double>((Mat<double>(2, 2) << 1, 2, 3, 4).finished());
  auto ones = make_vector<double>(Vec<double>::Ones(2));
  auto r = ops::matvec<double>(nullptr, w2, ones);
  CHECK(r->values()[0] == doctest::Approx(3));
  CHECK(r->values()[1] == doctest::Approx(7));

  auto bad = make_vector<double>(Vec<double>::Ones(3));
  CHECK_THROWS_AS(ops::matvec<double>(nullptr, w2, bad), dimension_error);
}

TEST_CASE("matvec is linear to 1e-12") {
  SeededRng rng(11);
  auto w = rand_tensor({8, 8}, rng);
  for (int rep = 0; rep < 20; ++rep) {
    auto y1 = rand_tensor({8}, rng);
    auto y2 = rand_tensor({8}, rng);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    auto combo = make_vector<double>(Vec<double>(a * y1->values() + b * y2->values()));
    Vec<double> lhs = ops::matvec<double>(nullptr, w, combo)->values();
    Vec<double> rhs = a * ops::matvec<double>(nullptr, w, y1)->values() +
                      b * ops::matvec<double>(nullptr, w, y2)->values();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("contract2d matches its definition and the matvec-composition oracle") {
  SeededRng rng(12);
  auto x = rand_tensor({4, 4}, rng);

  auto eye = make_matrix<double>(Mat<double>::Identity(4, 4));
  auto r = ops::contract2d<double>(nullptr, eye, x, eye);
  CHECK((r->values() - x->values()).norm() == 0);

  auto zero = make_tensor<double>({4, 4});
  CHECK(ops::contract2d<double>(nullptr, zero, x, eye)->values().norm() == 0);

  auto two = make_matrix<double>(Mat<double>(2.0 * Mat<double>::Identity(4, 4)));
  auto three = make_matrix<double>(Mat<double>(3.0 * Mat<double>::Identity(4, 4)));
  auto id = make_matrix<double>(Mat<double>::Identity(4, 4));
  auto six = ops::contract2d<double>(nullptr, two, id, three);
  CHECK((six->mat() - 6.0 * Mat<double>::Identity(4, 4)).norm() == doctest::Approx(0));

  // Column-by-column oracle: (A X B^T) e_j == A (X (B^T e_j)).
  auto a = rand_tensor({4, 4}, rng);
  auto b = rand_tensor({4, 4}, rng);
  auto full = ops::contract2d<double>(nullptr, a, x, b);
  Mat<double> oracle = a->mat() * (x->mat() * b->mat().transpose());
  CHECK((full->mat() - oracle).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("rational activation values and structure") {
  auto x = make_vector<double>((Vec<double>(3) << 0, 1, -3).finished());
  auto y = ops::rational_activation<double>(nullptr, x);
  CHECK(y->values()[0] == 0.0);
  CHECK(y->values()[1] == 0.5);
  CHECK(y->values()[2] == -0.75);

  SeededRng rng(3);
  for (int i = 0; i < 100; ++i) {
    auto v = make_scalar<double>(rng.uniform(-50, 50));
    auto neg = make_scalar<double>(-v->values()[0]);
    const double fwd = ops::rational_activation<double>(nullptr, v)->values()[0];
    const double bwd = ops::rational_activation<double>(nullptr, neg)->values()[0];
    CHECK(fwd == -bwd);  // odd, exactly
    CHECK(std::abs(fwd) < 1.0);
  }
}

TEST_CASE("relu activation with subgradient 0 at the kink") {
  auto x = make_vector<double>((Vec<double>(3) << 2, -2, 0).finished());
  GradTape<double> tape;
  auto y = ops::relu_activation(&tape, x);
  CHECK(y->values()[0] == 2);
  CHECK(y->values()[1] == 0);
  CHECK(y->values()[2] == 0);
  auto loss = ops::sum(&tape, y);
  tape.backward(loss);
  CHECK(x->grad()[0] == 1);
  CHECK(x->grad()[1] == 0);
  CHECK(x->grad()[2] == 0);
}

TEST_CASE("backward: bilinear form gradient") {
  SeededRng rng(4);
  auto w = rand_tensor({3, 3}, rng);
  auto y = rand_tensor({3}, rng);
  GradTape<double> tape;
  auto loss = ops::sum(&tape, ops::matvec(&tape, w, y));
  w->zero_grad();
  tape.backward(loss);
  // d(sum(W y))/dW[i][j] = y[j]
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(w->grad_mat()(i, j) == doctest::Approx(y->values()[j]));
}

TEST_CASE("backward: unused parameters keep zero gradients") {
  SeededRng rng(5);
  auto w = rand_tensor({3, 3}, rng);
  auto x = rand_tensor({3}, rng);
  GradTape<double> tape;
  auto loss = ops::sum(&tape, ops::cmul(&tape, x, x));
  w->zero_grad();
  tape.backward(loss);
  CHECK(w->grad().norm() == 0);
}

TEST_CASE("backward: quadratic gradient") {
  auto x = make_vector<double>((Vec<double>(2) << 1, 2).finished());
  GradTape<double> tape;
  auto loss = ops::sum(&tape, ops::cmul(&tape, x, x));
  tape.backward(loss);
  CHECK(x->grad()[0] == doctest::Approx(2));
  CHECK(x->grad()[1] == doctest::Approx(4));
}

TEST_CASE("backward: contract errors") {
  auto x = make_vector<double>((Vec<double>(2) << 1, 2).finished());
  GradTape<double> tape;
  auto y = ops::cmul(&tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), contract_error);  // not scalar
  auto loss = ops::sum(&tape, y);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), state_error);  // consumed
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  auto w = make_vector<double>((Vec<double>(2) << 1, -2).finished());
  w->name = "w";
  w->zero_grad();
  AdamState<double> adam;
  const Vec<double> before = w->values();
  adam.step({{"w", w}}, 1e-3);
  CHECK((w->values() - before).norm() == 0);
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam: first step collapses to -lr sign(g)") {
  auto w = make_scalar<double>(1.0);
  w->name = "w";
  w->grad()[0] = 1.0;
  AdamState<double> adam;
  adam.step({{"w", w}}, 0.1);
  CHECK(w->values()[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam: identical seeds give bit-identical trajectories") {
  auto run = [] {
    SeededRng rng(77);
    auto w = rand_tensor({16}, rng);
    w->name = "w";
    AdamState<double> adam;
    for (int it = 0; it < 50; ++it) {
      w->zero_grad();
      GradTape<double> tape;
      auto loss = ops::mean(&tape, ops::cmul(&tape, w, w));
      tape.backward(loss);
      adam.step({{"w", w}}, 1e-2);
    }
    return Vec<double>(w->values());
  };
  const Vec<double> a = run(), b = run();
  CHECK(a.size() == b.size());
  for (Index i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("grad_check: trivial quadratic") {
  auto w = make_scalar<double>(3.0);
  w->name = "w";
  auto loss_fn = [&](GradTape<double>* t) { return ops::cmul(t, w, w); };
  SeededRng rng(1);
  auto rep = grad_check<double>(loss_fn, {{"w", w}}, 10, 1e-6, rng);
  CHECK(rep.max_rel_err <= 1e-9);
}

TEST_CASE("seeded rng determinism and stream independence") {
  SeededRng a(123), b(123), c(124);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  bool differs = false;
  SeededRng a2(123);
  for (int i = 0; i < 10; ++i) differs |= (a2.next_u64() != c.next_u64());
  CHECK(differs);

  SeededRng parent(9);
  auto c1 = parent.child(0);
  auto c2 = parent.child(1);
  CHECK(c1.next_u64() != c2.next_u64());

  SeededRng s(55);
  s.normal();
  const std::string state = s.save_state();
  SeededRng restored = SeededRng::restore_state(state);
  for (int i = 0; i < 100; ++i) CHECK(s.normal() == restored.normal());
}
