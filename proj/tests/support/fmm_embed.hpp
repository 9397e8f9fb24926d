#pragma once

// Structural embedding of classical FMM matvec weights into a linear
// single-channel GFMM block: encoders take the up-sweep transfers (with the
// leaf input maps folded into level 1), decoders take the down-sweep
// transfers (with the leaf output maps folded into level 0), and the bridges
// take the neighbor couplings (wrapped in the leaf input/output maps at
// level 0, where the FMM near-field term becomes the bridge diagonal).

#include "gfmm/fmm_reference.hpp"
#include "gfmm/gfmm1d.hpp"
#include "gfmm/rng.hpp"

namespace gfmm::testing {

template <typename S>
FmmWeights<S> random_fmm_weights(int levels, Index p, SeededRng& rng) {
  auto rand_mat = [&](Index r, Index c) {
    Mat<S> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = S(rng.uniform(-1, 1));
    return m;
  };
  FmmWeights<S> w;
  w.levels = levels;
  const Index m = w.leaves();
  for (Index i = 0; i < m; ++i) {
    w.leaf_in.push_back(rand_mat(p, p));
    w.near.push_back(rand_mat(p, p));
    w.leaf_out.push_back(rand_mat(p, p));
  }
  w.up.resize(static_cast<std::size_t>(levels));
  w.down.resize(static_cast<std::size_t>(levels));
  w.coupling.resize(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const Index ml = m >> l;
    for (Index i = 0; i < ml; ++i) {
      w.up[static_cast<std::size_t>(l)].push_back(rand_mat(p, p));
      w.down[static_cast<std::size_t>(l)].push_back(rand_mat(p, p));
    }
    for (Index i = 0; i + 1 < ml; ++i)
      w.coupling[static_cast<std::size_t>(l)].push_back({rand_mat(p, p), rand_mat(p, p)});
  }
  return w;
}

template <typename S>
GFMMBlock1D<S> embed_fmm_into_gfmm(const FmmWeights<S>& w, Index p) {
  GFMMConfig cfg;
  cfg.levels = w.levels;
  cfg.input_len = w.leaves() * p;
  GFMMBlock1D<S> block(cfg);  // zero weights
  const int L = w.levels;

  for (int l = 1; l <= L; ++l) {
    const Index nj = block.encoder_count(l);
    for (Index j = 0; j < nj; ++j) {
      Mat<S> e = w.up[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(j)];
      if (l == 1) e = e * w.leaf_in[static_cast<std::size_t>(j)];
      block.encoder(l, j)->mat() = e;
    }
  }
  for (int l = 0; l < L; ++l) {
    const Index ni = block.decoder_count(l);
    for (Index i = 0; i < ni; ++i) {
      Mat<S> d = w.down[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
      if (l == 0) d = w.leaf_out[static_cast<std::size_t>(i)] * d;
      block.decoder(l, i)->mat() = d;
    }
  }
  // Interior levels couple directly; the apex bridge stays zero (the FMM
  // root receives nothing).
  for (int l = 1; l < L; ++l) {
    auto& b = block.bridge(l);
    for (std::size_t i = 0; i < b.upper.size(); ++i) {
      b.upper[i]->mat() = w.coupling[static_cast<std::size_t>(l)][i].first;
      b.lower[i]->mat() = w.coupling[static_cast<std::size_t>(l)][i].second;
    }
  }
  // Leaf level: the near-field map is the diagonal; couplings are wrapped in
  // the leaf output/input maps.
  auto& b0 = block.bridge(0);
  for (std::size_t i = 0; i < b0.diag.size(); ++i) b0.diag[i]->mat() = w.near[i];
  for (std::size_t i = 0; i < b0.upper.size(); ++i) {
    b0.upper[i]->mat() = w.leaf_out[i] * w.coupling[0][i].first * w.leaf_in[i + 1];
    b0.lower[i]->mat() = w.leaf_out[i + 1] * w.coupling[0][i].second * w.leaf_in[i];
  }
  return block;
}

}  // namespace gfmm::testing
