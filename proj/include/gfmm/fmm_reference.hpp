#pragma once

#include "gfmm/core.hpp"

#include <vector>

namespace gfmm {

// Literal implementation of the classical FMM matrix-vector recursions over a
// complete binary tree of M = 2^L leaf blocks:
//
//   g_i = V_i x_i + sum_{j in children(i)} W_j g_j        (up-sweep)
//   f_i = R_i f_parent(i) + sum_{j in neighbors(i)} B_{i,j} g_j
//   b_i = D_i x_i + U_i f_i                               (leaf output)
//
// V and the x/b terms live at the leaves; W/R belong to every non-root node;
// B couples same-level index neighbors (|i - j| = 1, edges not in the tree);
// the root has no parent and no neighbors, so f at the root is zero.
template <typename S>
struct FmmWeights {
  int levels = 0;  // tree over 2^levels leaves

  std::vector<Mat<S>> leaf_in;   // V_i, per leaf
  std::vector<Mat<S>> near;      // D_i, per leaf
  std::vector<Mat<S>> leaf_out;  // U_i, per leaf

  // up[l][i] = W for node i at level l (l = 0..levels-1), transferring into
  // its parent; down[l][i] = R for the same node, receiving from its parent.
  std::vector<std::vector<Mat<S>>> up;
  std::vector<std::vector<Mat<S>>> down;

  // coupling[l][i] = {B_{i,i+1}, B_{i+1,i}} between neighbors i and i+1 at
  // level l (l = 0..levels-1).
  std::vector<std::vector<std::pair<Mat<S>, Mat<S>>>> coupling;

  Index leaves() const { return Index(1) << levels; }

  void validate() const {
    require_config(levels >= 1, "fmm: levels must be >= 1");
    const Index m = leaves();
    require_config(static_cast<Index>(leaf_in.size()) == m && static_cast<Index>(near.size()) == m &&
                       static_cast<Index>(leaf_out.size()) == m,
                   "fmm: leaf weight counts do not match the tree");
    require_config(static_cast<int>(up.size()) == levels && static_cast<int>(down.size()) == levels &&
                       static_cast<int>(coupling.size()) == levels,
                   "fmm: per-level weight counts do not match the tree");
    for (int l = 0; l < levels; ++l) {
      const Index ml = m >> l;
      require_config(static_cast<Index>(up[static_cast<std::size_t>(l)].size()) == ml &&
                         static_cast<Index>(down[static_cast<std::size_t>(l)].size()) == ml &&
                         static_cast<Index>(coupling[static_cast<std::size_t>(l)].size()) == ml - 1,
                     "fmm: incomplete tree at level " + std::to_string(l));
    }
  }
};

template <typename S>
std::vector<Vec<S>> fmm_matvec_reference(const FmmWeights<S>& w, const std::vector<Vec<S>>& x) {
  w.validate();
  const Index m = w.leaves();
  require(static_cast<Index>(x.size()) == m, "fmm: input block count mismatch");
  const int L = w.levels;

  // Up-sweep.
  std::vector<std::vector<Vec<S>>> g(static_cast<std::size_t>(L + 1));
  g[0].resize(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i)
    g[0][static_cast<std::size_t>(i)] = w.leaf_in[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
  for (int l = 1; l <= L; ++l) {
    const Index ml = m >> l;
    g[static_cast<std::size_t>(l)].resize(static_cast<std::size_t>(ml));
    for (Index i = 0; i < ml; ++i) {
      const auto& wl = w.up[static_cast<std::size_t>(l - 1)];
      g[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] =
          wl[static_cast<std::size_t>(2 * i)] * g[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(2 * i)] +
          wl[static_cast<std::size_t>(2 * i + 1)] * g[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(2 * i + 1)];
    }
  }

  // Transfer down; the root receives nothing.
  std::vector<std::vector<Vec<S>>> f(static_cast<std::size_t>(L + 1));
  f[static_cast<std::size_t>(L)].resize(1);
  f[static_cast<std::size_t>(L)][0] = Vec<S>::Zero(g[static_cast<std::size_t>(L)][0].size());
  for (int l = L - 1; l >= 0; --l) {
    const Index ml = m >> l;
    auto& fl = f[static_cast<std::size_t>(l)];
    fl.resize(static_cast<std::size_t>(ml));
    for (Index i = 0; i < ml; ++i) {
      Vec<S> fi = w.down[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)] *
                  f[static_cast<std::size_t>(l + 1)][static_cast<std::size_t>(i / 2)];
      if (i > 0)
        fi += w.coupling[static_cast<std::size_t>(l)][static_cast<std::size_t>(i - 1)].second *
              g[static_cast<std::size_t>(l)][static_cast<std::size_t>(i - 1)];
      if (i + 1 < ml)
        fi += w.coupling[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)].first *
              g[static_cast<std::size_t>(l)][static_cast<std::size_t>(i + 1)];
      fl[static_cast<std::size_t>(i)] = fi;
    }
  }

  std::vector<Vec<S>> b(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i)
    b[static_cast<std::size_t>(i)] = w.near[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)] +
                                     w.leaf_out[static_cast<std::size_t>(i)] * f[0][static_cast<std::size_t>(i)];
  return b;
}

}  // namespace gfmm
