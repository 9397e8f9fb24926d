#include <doctest.h>

#include "fmm_embed.hpp"
#include "gfmm/gfmm1d.hpp"
#include "gfmm/gradcheck.hpp"
#include "gfmm/tape.hpp"

#include <Eigen/SVD>

using namespace gfmm;

namespace {

TensorPtr<double> rand_input(Index c, Index d, SeededRng& rng) {
  auto t = make_tensor<double>({c, d});
  for (Index i = 0; i < t->numel(); ++i) t->values()[i] = rng.uniform(-1, 1);
  return t;
}

GFMMConfig single_channel(Index d, int levels, Activation act = Activation::identity) {
  GFMMConfig cfg;
  cfg.input_len = d;
  cfg.levels = levels;
  cfg.activation = act;
  return cfg;
}

// B^0 <- block identity, everything else zero: the block passes c through.
template <typename S>
void make_passthrough(GFMMBlock1D<S>& block) {
  block.set_zero();
  auto& b0 = block.bridge(0);
  for (auto& w : b0.diag) w->mat() = Mat<S>::Identity(w->dim(0), w->dim(1));
}

}  // namespace

TEST_CASE("parameter counts: closed form vs enumeration vs allocation") {
  // L = 1, P = 1: 2 encoders + 2 decoders + 4 B^0 blocks + 1 B^1 block.
  CHECK(gfmm1d_param_count_closed_form(1, 1) == 9);
  CHECK(gfmm1d_param_count(single_channel(2, 1)) == 9);

  // Table row: L = 4, P = 16 -> 36,608 per block, 73,216 for two.
  CHECK(gfmm1d_param_count_closed_form(4, 16) == 36608);
  CHECK(gfmm1d_param_count(single_channel(256, 4)) == 36608);
  CHECK(2 * gfmm1d_param_count(single_channel(256, 4)) == 73216);

  for (int levels = 1; levels <= 5; ++levels)
    for (Index p : {1, 2, 4, 8, 16}) {
      const Index d = p << levels;
      const auto cfg = single_channel(d, levels);
      GFMMBlock1D<double> block(cfg);
      CHECK(block.param_count() == gfmm1d_param_count_closed_form(levels, p));
      CHECK(gfmm1d_param_count(cfg) == gfmm1d_param_count_closed_form(levels, p));
      // The hierarchical factorization beats a dense D x D layer once the
      // tree is deep enough: 10 * 2^L - 2L - 9 < 2^2L from L = 4 on.
      if (levels >= 4) CHECK(block.param_count() < d * d);
    }
}

TEST_CASE("config validation") {
  GFMMConfig cfg = single_channel(20, 3);  // 20 not divisible by 8
  CHECK_THROWS_AS(cfg.validate(), config_error);
  CHECK_THROWS_AS(single_channel(2, 0).validate(), config_error);
  CHECK_NOTHROW(single_channel(16, 3).validate());
}

TEST_CASE("basis_transform: identity, zero correction, channel sum") {
  SeededRng rng(21);
  const Index p = 4;

  auto f = make_tensor<double>({p, p});
  f->mat() = Mat<double>::Identity(p, p);
  auto y = rand_input(1, p, rng);
  auto out = basis_transform<double>(nullptr, f, y, nullptr, Activation::identity);
  CHECK((out->values() - y->values()).norm() == 0);

  auto eps0 = make_tensor<double>({p, p});
  auto with0 = basis_transform<double>(nullptr, f, y, eps0, Activation::identity);
  for (Index i = 0; i < p; ++i) CHECK(with0->values()[i] == out->values()[i]);

  // C_in = 2, C_out = 1, both slices identity: output is the channel sum.
  auto f2 = make_tensor<double>({1, 2, p, p});
  for (Index j = 0; j < 2; ++j) f2->slice_mut(0, j) = Mat<double>::Identity(p, p);
  auto y2 = rand_input(2, p, rng);
  auto sum = basis_transform<double>(nullptr, f2, y2, nullptr, Activation::identity);
  Vec<double> expect = y2->mat().row(0).transpose() + y2->mat().row(1).transpose();
  CHECK((sum->values() - expect).cwiseAbs().maxCoeff() <= 1e-15);

  auto bad_eps = make_tensor<double>({p, p + 1});
  CHECK_THROWS_AS(basis_transform<double>(nullptr, f, y, bad_eps, Activation::identity), dimension_error);
}

TEST_CASE("forward: zero weights annihilate, outermost identity bridge passes through") {
  SeededRng rng(22);
  GFMMBlock1D<double> block(single_channel(32, 3), rng);
  auto c = rand_input(1, 32, rng);

  block.set_zero();
  CHECK(block.forward(nullptr, c).output->values().norm() == 0);

  make_passthrough(block);
  auto out = block.forward(nullptr, c).output;
  CHECK((out->values() - c->values()).norm() == 0);
}

TEST_CASE("forward: latent state shapes match the tree") {
  SeededRng rng(23);
  GFMMConfig cfg = single_channel(32, 3);
  cfg.c_in = 2;
  cfg.c_hidden = 3;
  GFMMBlock1D<double> block(cfg, rng);
  auto c = rand_input(2, 32, rng);
  auto res = block.forward(nullptr, c);
  const Index m = cfg.leaf_blocks();
  REQUIRE(res.latent.h.size() == 4);
  REQUIRE(res.latent.z.size() == 4);
  for (int l = 0; l <= 3; ++l) {
    CHECK(static_cast<Index>(res.latent.h[static_cast<std::size_t>(l)].size()) == (m >> l));
    CHECK(static_cast<Index>(res.latent.z[static_cast<std::size_t>(l)].size()) == (m >> l));
  }
  CHECK(res.latent.h[1][0]->shape() == std::vector<Index>{3, 4});
  CHECK(res.latent.h[0][0]->shape() == std::vector<Index>{2, 4});
}

TEST_CASE("forward: input length must divide") {
  SeededRng rng(24);
  GFMMBlock1D<double> block(single_channel(32, 3), rng);
  auto bad = rand_input(1, 20, rng);
  CHECK_THROWS(block.forward(nullptr, bad));
}

TEST_CASE("dense assembly oracle and superposition, 64-bit") {
  SeededRng rng(25);
  GFMMBlock1D<double> block(single_channel(64, 3), rng);
  const Mat<double> g = assemble_dense(block);

  for (int rep = 0; rep < 20; ++rep) {
    auto c = rand_input(1, 64, rng);
    const Vec<double> via_matrix = g * c->values();
    const Vec<double> via_forward = block.forward(nullptr, c).output->values();
    CHECK((via_matrix - via_forward).cwiseAbs().maxCoeff() <= 1e-12);
  }

  for (int rep = 0; rep < 5; ++rep) {
    auto c1 = rand_input(1, 64, rng);
    auto c2 = rand_input(1, 64, rng);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    auto combo = make_tensor<double>({1, 64}, Vec<double>(a * c1->values() + b * c2->values()));
    Vec<double> lhs = block.forward(nullptr, combo).output->values();
    Vec<double> rhs = a * block.forward(nullptr, c1).output->values() +
                      b * block.forward(nullptr, c2).output->values();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }

  GFMMBlock1D<double> nonlinear(single_channel(16, 2, Activation::rational), rng);
  CHECK_THROWS_AS(assemble_dense(nonlinear), contract_error);

  GFMMBlock1D<double> zero(single_channel(16, 2));
  CHECK(assemble_dense(zero).norm() == 0);
  make_passthrough(zero);
  CHECK((assemble_dense(zero) - Mat<double>::Identity(16, 16)).norm() == 0);
}

TEST_CASE("apex bottleneck: only B^L nonzero gives rank <= P") {
  SeededRng rng(26);
  GFMMBlock1D<double> block(single_channel(32, 2), rng);
  // Zero every bridge except the apex.
  for (int l = 0; l < 2; ++l) {
    auto& b = block.bridge(l);
    for (auto& w : b.diag) w->values().setZero();
    for (auto& w : b.lower) w->values().setZero();
    for (auto& w : b.upper) w->values().setZero();
  }
  const Mat<double> g = assemble_dense(block);
  Eigen::JacobiSVD<Mat<double>> svd(g);
  const auto& sv = svd.singularValues();
  const Index p = block.config().block_size();
  REQUIRE(sv.size() > p);
  CHECK(sv[p] <= 1e-12 * sv[0]);
}

TEST_CASE("fusion neutrality: zero corrections are bit-identical to no corrections") {
  SeededRng rng(27);
  GFMMConfig cfg = single_channel(32, 3, Activation::rational);
  GFMMBlock1D<double> block(cfg, rng);
  auto c = rand_input(1, 32, rng);

  FusionEps<double> fusion;
  const Index p = cfg.block_size();
  fusion.enc.resize(3);
  fusion.dec.resize(3);
  for (int l = 1; l <= 3; ++l)
    for (Index j = 0; j < block.encoder_count(l); ++j)
      fusion.enc[static_cast<std::size_t>(l - 1)].push_back(make_tensor<double>({p, p}));
  for (int l = 0; l < 3; ++l)
    for (Index i = 0; i < block.decoder_count(l); ++i)
      fusion.dec[static_cast<std::size_t>(l)].push_back(make_tensor<double>({p, p}));

  const Vec<double> base = block.forward(nullptr, c).output->values();
  const Vec<double> fused = block.forward(nullptr, c, &fusion).output->values();
  REQUIRE(base.size() == fused.size());
  for (Index i = 0; i < base.size(); ++i) CHECK(base[i] == fused[i]);

  fusion.enc[0].pop_back();
  CHECK_THROWS_AS(block.forward(nullptr, c, &fusion), config_error);
}

TEST_CASE("fmm reference: leaf passthrough") {
  SeededRng rng(28);
  const Index p = 3;
  auto w = testing::random_fmm_weights<double>(2, p, rng);
  for (auto& lvl : w.up)
    for (auto& m : lvl) m.setZero();
  for (auto& lvl : w.down)
    for (auto& m : lvl) m.setZero();
  for (auto& lvl : w.coupling)
    for (auto& pr : lvl) {
      pr.first.setZero();
      pr.second.setZero();
    }
  for (auto& m : w.near) m = Mat<double>::Identity(p, p);

  std::vector<Vec<double>> x;
  for (Index i = 0; i < w.leaves(); ++i) {
    Vec<double> xi(p);
    for (Index k = 0; k < p; ++k) xi[k] = rng.uniform(-1, 1);
    x.push_back(xi);
  }
  auto b = fmm_matvec_reference(w, x);
  for (Index i = 0; i < w.leaves(); ++i) CHECK((b[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)]).norm() == 0);
}

TEST_CASE("fmm reference: M = 2 hand expansion") {
  SeededRng rng(29);
  const Index p = 2;
  auto w = testing::random_fmm_weights<double>(1, p, rng);
  std::vector<Vec<double>> x{Vec<double>(p), Vec<double>(p)};
  for (auto& xi : x)
    for (Index k = 0; k < p; ++k) xi[k] = rng.uniform(-1, 1);

  auto b = fmm_matvec_reference(w, x);
  // Root f is zero, so: b_0 = D_0 x_0 + U_0 B_{01} V_1 x_1 (and symmetrically).
  Vec<double> b0 = w.near[0] * x[0] + w.leaf_out[0] * (w.coupling[0][0].first * (w.leaf_in[1] * x[1]));
  Vec<double> b1 = w.near[1] * x[1] + w.leaf_out[1] * (w.coupling[0][0].second * (w.leaf_in[0] * x[0]));
  CHECK((b[0] - b0).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((b[1] - b1).cwiseAbs().maxCoeff() <= 1e-14);

  FmmWeights<double> broken = w;
  broken.up[0].pop_back();
  CHECK_THROWS_AS(fmm_matvec_reference(broken, x), config_error);
}

TEST_CASE("fmm reference equals the structurally embedded GFMM block") {
  SeededRng rng(30);
  const Index p = 4;
  const int levels = 3;
  auto w = testing::random_fmm_weights<double>(levels, p, rng);
  auto block = testing::embed_fmm_into_gfmm(w, p);

  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Vec<double>> x;
    auto c = make_tensor<double>({1, w.leaves() * p});
    for (Index i = 0; i < w.leaves(); ++i) {
      Vec<double> xi(p);
      for (Index k = 0; k < p; ++k) xi[k] = rng.uniform(-1, 1);
      c->values().segment(i * p, p) = xi;
      x.push_back(xi);
    }
    const auto b = fmm_matvec_reference(w, x);
    const Vec<double> via_gfmm = block.forward(nullptr, c).output->values();
    for (Index i = 0; i < w.leaves(); ++i) {
      const Vec<double> diff = via_gfmm.segment(i * p, p) - b[static_cast<std::size_t>(i)];
      CHECK(diff.cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("gradcheck: linear and multichannel rational blocks") {
  SeededRng rng(31);
  GFMMConfig cfg = single_channel(32, 3);
  GFMMBlock1D<double> block(cfg, rng);
  auto c = rand_input(1, 32, rng);
  auto target = rand_input(1, 32, rng);
  std::vector<Param<double>> params;
  block.collect_params("blk.", params);
  auto loss_fn = [&](GradTape<double>* t) {
    auto r = block.forward(t, c);
    return mse_loss(t, r.output, target);
  };
  SeededRng prng(1);
  CHECK(grad_check<double>(loss_fn, params, 200, 1e-6, prng).max_rel_err <= 1e-5);

  GFMMConfig cfg2 = single_channel(32, 2, Activation::rational);
  cfg2.c_in = 2;
  cfg2.c_hidden = 3;
  GFMMBlock1D<double> block2(cfg2, rng);
  auto c2 = rand_input(2, 32, rng);
  std::vector<Param<double>> params2;
  block2.collect_params("blk2.", params2);
  auto loss_fn2 = [&](GradTape<double>* t) {
    auto r = block2.forward(t, c2);
    return mse_loss(t, r.output, target);
  };
  CHECK(grad_check<double>(loss_fn2, params2, 200, 1e-6, prng).max_rel_err <= 1e-5);
}
