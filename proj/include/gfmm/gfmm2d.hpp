#pragma once

#include "gfmm/rng.hpp"
#include "gfmm/tape.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace gfmm {

// ============================================================================
// Morton (Z-order) block layout
// ============================================================================

// Maps between (block-row, block-col) grid positions and the Z-order
// sequence TL, TR, BL, BR applied recursively. The row bit is the high bit
// of each interleaved pair.
struct MortonLayout {
  Index grid_side = 0;   // N
  Index block_side = 0;  // P2

  Index blocks_per_side() const { return grid_side / block_side; }
  Index block_count() const { return blocks_per_side() * blocks_per_side(); }

  void validate() const {
    require_config(grid_side >= 1 && block_side >= 1, "morton: sizes must be positive");
    require_config(grid_side % block_side == 0, "morton: grid side not divisible by block side");
    const Index b = blocks_per_side();
    require_config((b & (b - 1)) == 0, "morton: blocks per side must be a power of two");
  }

  static Index interleave(Index row, Index col) {
    Index m = 0;
    for (int b = 0; b < 32; ++b) {
      m |= ((col >> b) & 1) << (2 * b);
      m |= ((row >> b) & 1) << (2 * b + 1);
    }
    return m;
  }

  static std::pair<Index, Index> deinterleave(Index m) {
    Index row = 0, col = 0;
    for (int b = 0; b < 32; ++b) {
      col |= ((m >> (2 * b)) & 1) << b;
      row |= ((m >> (2 * b + 1)) & 1) << b;
    }
    return {row, col};
  }

  Index from_grid(Index block_row, Index block_col) const { return interleave(block_row, block_col); }
  std::pair<Index, Index> to_grid(Index z) const { return deinterleave(z); }
};

// Blocks of X listed in Z-order.
template <typename S>
std::vector<Mat<S>> morton_blocks(const Mat<S>& x, Index block_side) {
  MortonLayout layout{x.rows(), block_side};
  require(x.rows() == x.cols(), "morton_blocks: matrix must be square");
  layout.validate();
  std::vector<Mat<S>> out(static_cast<std::size_t>(layout.block_count()));
  for (Index z = 0; z < layout.block_count(); ++z) {
    auto [r, c] = layout.to_grid(z);
    out[static_cast<std::size_t>(z)] = x.block(r * block_side, c * block_side, block_side, block_side);
  }
  return out;
}

// ============================================================================
// 2D GFMM block
// ============================================================================

// Tensor product of the 1D design: a quadtree whose encoder/decoder nodes
// apply four bilinear contractions A X B^T, with block-tridiagonal bridge
// operators (contraction pairs) over the Morton sequence at every level.
template <typename S>
class GFMMBlock2D {
 public:
  struct ContractionPair {
    TensorPtr<S> a, b;
  };

  struct Config {
    Index grid_side = 0;   // N
    Index block_side = 0;  // P2
    int levels = 0;        // quadtree depth
    Activation activation = Activation::identity;

    MortonLayout layout() const { return MortonLayout{grid_side, block_side}; }
    Index leaf_count() const { return layout().block_count(); }

    void validate() const {
      layout().validate();
      require_config(levels >= 1, "gfmm2d: levels must be >= 1");
      const Index leaves = leaf_count();
      require_config(leaves >= 4, "gfmm2d: need at least four leaf blocks");
      require_config(leaves >> (2 * levels) >= 1, "gfmm2d: tree deeper than the block grid allows");
    }

    Index nodes_at(int level) const { return leaf_count() >> (2 * level); }  // level 0 = leaves
    bool linear() const { return activation == Activation::identity; }
  };

  GFMMBlock2D() = default;

  explicit GFMMBlock2D(const Config& cfg) : cfg_(cfg) {
    cfg_.validate();
    allocate();
  }

  GFMMBlock2D(const Config& cfg, SeededRng& rng) : GFMMBlock2D(cfg) { init_uniform(rng); }

  const Config& config() const { return cfg_; }

  void init_uniform(SeededRng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.block_side));
    for_each_param([&](const std::string&, const TensorPtr<S>& w) {
      for (Index k = 0; k < w->numel(); ++k) w->values()[k] = S(rng.uniform(-bound, bound));
    });
  }

  void set_zero() {
    for_each_param([](const std::string&, const TensorPtr<S>& w) { w->values().setZero(); });
  }

  Index param_count() const {
    Index n = 0;
    for_each_param([&](const std::string&, const TensorPtr<S>& w) { n += w->numel(); });
    return n;
  }

  std::vector<TensorPtr<S>> all_weights() const {
    std::vector<TensorPtr<S>> out;
    for_each_param([&](const std::string&, const TensorPtr<S>& w) { out.push_back(w); });
    return out;
  }

  GFMMBlock2D copy() const {
    GFMMBlock2D out(cfg_);
    auto src = all_weights();
    auto dst = out.all_weights();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k]->values() = src[k]->values();
    return out;
  }

  void collect_params(const std::string& prefix, std::vector<Param<S>>& out) const {
    for_each_param([&](const std::string& name, const TensorPtr<S>& w) {
      w->name = prefix + name;
      out.push_back({w->name, w});
    });
  }

  template <typename F>
  void for_each_param(F&& fn) const {
    for (int l = 1; l <= cfg_.levels; ++l) {
      const auto& nodes = enc_[static_cast<std::size_t>(l - 1)];
      for (std::size_t p = 0; p < nodes.size(); ++p)
        for (int k = 0; k < 4; ++k) {
          const std::string base =
              "enc.l" + std::to_string(l) + ".n" + std::to_string(p) + ".k" + std::to_string(k);
          fn(base + ".A", nodes[p][static_cast<std::size_t>(k)].a);
          fn(base + ".B", nodes[p][static_cast<std::size_t>(k)].b);
        }
    }
    for (int l = 0; l < cfg_.levels; ++l) {
      const auto& row = dec_[static_cast<std::size_t>(l)];
      for (std::size_t i = 0; i < row.size(); ++i) {
        const std::string base = "dec.l" + std::to_string(l) + ".i" + std::to_string(i);
        fn(base + ".A", row[i].a);
        fn(base + ".B", row[i].b);
      }
    }
    for (int l = 0; l <= cfg_.levels; ++l) {
      const auto& b = bridges_[static_cast<std::size_t>(l)];
      const std::string base = "bridge.l" + std::to_string(l);
      auto emit = [&](const char* tag, const std::vector<ContractionPair>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          fn(base + "." + tag + std::to_string(i) + ".A", v[i].a);
          fn(base + "." + tag + std::to_string(i) + ".B", v[i].b);
        }
      };
      emit("d", b.diag);
      emit("lo", b.lower);
      emit("up", b.upper);
    }
  }

  // Forward pass mirroring the 1D sweep with quadtree fan-in/fan-out.
  TensorPtr<S> forward(GradTape<S>* t, const TensorPtr<S>& input) const {
    const Index n = cfg_.grid_side;
    const Index p = cfg_.block_side;
    const int L = cfg_.levels;
    require(input->rank() == 2 && input->dim(0) == n && input->dim(1) == n,
            "gfmm2d forward: input must be [N, N]");
    const MortonLayout layout = cfg_.layout();

    std::vector<std::vector<TensorPtr<S>>> h(static_cast<std::size_t>(L + 1));
    auto& h0 = h[0];
    h0.resize(static_cast<std::size_t>(layout.block_count()));
    for (Index z = 0; z < layout.block_count(); ++z) {
      auto [r, c] = layout.to_grid(z);
      h0[static_cast<std::size_t>(z)] = ops::block2d(t, input, r * p, c * p, p, p);
    }

    for (int l = 1; l <= L; ++l) {
      const Index ml = cfg_.nodes_at(l);
      auto& hl = h[static_cast<std::size_t>(l)];
      const auto& prev = h[static_cast<std::size_t>(l - 1)];
      hl.resize(static_cast<std::size_t>(ml));
      for (Index i = 0; i < ml; ++i) {
        const auto& node = enc_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(i)];
        std::vector<TensorPtr<S>> terms;
        terms.reserve(4);
        for (Index k = 0; k < 4; ++k) {
          const auto& pair = node[static_cast<std::size_t>(k)];
          auto y = ops::contract2d(t, pair.a, prev[static_cast<std::size_t>(4 * i + k)], pair.b);
          terms.push_back(ops::apply_activation(t, y, cfg_.activation));
        }
        hl[static_cast<std::size_t>(i)] = ops::sum_list(t, terms);
      }
    }

    std::vector<std::vector<TensorPtr<S>>> z(static_cast<std::size_t>(L + 1));
    z[static_cast<std::size_t>(L)] = bridge_apply(t, L, h[static_cast<std::size_t>(L)]);

    for (int l = L - 1; l >= 0; --l) {
      const Index ml = cfg_.nodes_at(l);
      auto& zl = z[static_cast<std::size_t>(l)];
      const auto& znext = z[static_cast<std::size_t>(l + 1)];
      zl.resize(static_cast<std::size_t>(ml));
      for (Index i = 0; i < ml; ++i) {
        const auto& pair = dec_[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
        auto y = ops::contract2d(t, pair.a, znext[static_cast<std::size_t>(i / 4)], pair.b);
        zl[static_cast<std::size_t>(i)] = ops::apply_activation(t, y, cfg_.activation);
      }
      auto bl = bridge_apply(t, l, h[static_cast<std::size_t>(l)]);
      for (Index i = 0; i < ml; ++i)
        zl[static_cast<std::size_t>(i)] = ops::add(t, zl[static_cast<std::size_t>(i)], bl[static_cast<std::size_t>(i)]);
    }

    std::vector<std::pair<Index, Index>> offsets(static_cast<std::size_t>(layout.block_count()));
    for (Index zi = 0; zi < layout.block_count(); ++zi) {
      auto [r, c] = layout.to_grid(zi);
      offsets[static_cast<std::size_t>(zi)] = {r * p, c * p};
    }
    return ops::assemble_blocks(t, n, n, z[0], offsets);
  }

 private:
  struct Bridge {
    std::vector<ContractionPair> diag, lower, upper;
  };

  std::vector<TensorPtr<S>> bridge_apply(GradTape<S>* t, int level,
                                         const std::vector<TensorPtr<S>>& h) const {
    const auto& b = bridges_[static_cast<std::size_t>(level)];
    const Index m = static_cast<Index>(h.size());
    std::vector<TensorPtr<S>> out(static_cast<std::size_t>(m));
    std::vector<TensorPtr<S>> terms;
    for (Index i = 0; i < m; ++i) {
      terms.clear();
      if (i > 0) {
        const auto& pr = b.lower[static_cast<std::size_t>(i - 1)];
        terms.push_back(ops::contract2d(t, pr.a, h[static_cast<std::size_t>(i - 1)], pr.b));
      }
      {
        const auto& pr = b.diag[static_cast<std::size_t>(i)];
        terms.push_back(ops::contract2d(t, pr.a, h[static_cast<std::size_t>(i)], pr.b));
      }
      if (i + 1 < m) {
        const auto& pr = b.upper[static_cast<std::size_t>(i)];
        terms.push_back(ops::contract2d(t, pr.a, h[static_cast<std::size_t>(i + 1)], pr.b));
      }
      out[static_cast<std::size_t>(i)] = ops::sum_list(t, terms);
    }
    return out;
  }

  ContractionPair make_pair() const {
    return {make_tensor<S>({cfg_.block_side, cfg_.block_side}),
            make_tensor<S>({cfg_.block_side, cfg_.block_side})};
  }

  void allocate() {
    const int L = cfg_.levels;
    enc_.resize(static_cast<std::size_t>(L));
    for (int l = 1; l <= L; ++l) {
      auto& nodes = enc_[static_cast<std::size_t>(l - 1)];
      nodes.resize(static_cast<std::size_t>(cfg_.nodes_at(l)));
      for (auto& node : nodes) {
        node.resize(4);
        for (auto& pr : node) pr = make_pair();
      }
    }
    dec_.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      auto& row = dec_[static_cast<std::size_t>(l)];
      row.resize(static_cast<std::size_t>(cfg_.nodes_at(l)));
      for (auto& pr : row) pr = make_pair();
    }
    bridges_.resize(static_cast<std::size_t>(L + 1));
    for (int l = 0; l <= L; ++l) {
      const Index ml = cfg_.nodes_at(l);
      auto& b = bridges_[static_cast<std::size_t>(l)];
      b.diag.resize(static_cast<std::size_t>(ml));
      b.lower.resize(static_cast<std::size_t>(ml - 1));
      b.upper.resize(static_cast<std::size_t>(ml - 1));
      for (auto& pr : b.diag) pr = make_pair();
      for (auto& pr : b.lower) pr = make_pair();
      for (auto& pr : b.upper) pr = make_pair();
    }
  }

 public:
  // Exposed for structured tests (encoder level 1..L, decoder level 0..L-1).
  std::vector<ContractionPair>& encoder_node(int level, Index i) {
    return enc_[static_cast<std::size_t>(level - 1)][static_cast<std::size_t>(i)];
  }
  ContractionPair& decoder_node(int level, Index i) {
    return dec_[static_cast<std::size_t>(level)][static_cast<std::size_t>(i)];
  }
  Bridge& bridge(int level) { return bridges_[static_cast<std::size_t>(level)]; }

 private:
  Config cfg_;
  std::vector<std::vector<std::vector<ContractionPair>>> enc_;  // [l-1][node][child]
  std::vector<std::vector<ContractionPair>> dec_;               // [l][i]
  std::vector<Bridge> bridges_;                                 // [l]
};

// Dense (N^2 x N^2) operator of a linear 2D block over vec(C), built from
// canonical basis matrices.
template <typename S>
Mat<S> assemble_dense(const GFMMBlock2D<S>& block) {
  const auto& cfg = block.config();
  if (!cfg.linear()) throw contract_error("assemble_dense: 2d block must use the identity activation");
  const Index n = cfg.grid_side;
  Mat<S> g(n * n, n * n);
  auto e = make_tensor<S>({n, n});
  for (Index j = 0; j < n * n; ++j) {
    e->values().setZero();
    e->values()[j] = S(1);
    auto out = block.forward(nullptr, e);
    g.col(j) = out->values();
  }
  return g;
}

}  // namespace gfmm
