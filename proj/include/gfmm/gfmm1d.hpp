#pragma once

#include "gfmm/rng.hpp"
#include "gfmm/tape.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace gfmm {

// ============================================================================
// Configuration
// ============================================================================

struct GFMMConfig {
  Index input_len = 0;  // D
  int levels = 0;       // L
  Index c_in = 1;
  Index c_hidden = 1;
  Index c_out = 1;
  Activation activation = Activation::identity;

  Index leaf_blocks() const { return Index(1) << levels; }          // M = 2^L
  Index block_size() const { return input_len / leaf_blocks(); }    // P = D / M

  bool linear() const { return activation == Activation::identity; }

  void validate() const {
    require_config(levels >= 1, "gfmm: levels must be >= 1");
    require_config(input_len >= 1, "gfmm: input length must be >= 1");
    require_config(input_len % leaf_blocks() == 0, "gfmm: input length not divisible by 2^levels");
    require_config(block_size() >= 1, "gfmm: block size must be >= 1");
    require_config(c_in >= 1 && c_hidden >= 1 && c_out >= 1, "gfmm: channel counts must be >= 1");
  }
};

// Closed-form scalar count of the single-channel linear block.
inline Index gfmm1d_param_count_closed_form(int levels, Index p) {
  const Index m = Index(1) << levels;
  return (10 * m - 2 * levels - 9) * p * p;
}

// ============================================================================
// Basis transform (the per-node transformation)
// ============================================================================

// z_i = phi( sum_j (F_ij + eps) y_j ), with eps an optional additive P x P
// weight correction shared across channel pairs. F is [Cout, Cin, P, P]
// (or plain P x P for the single-channel case), y is [Cin, P].
template <typename S>
TensorPtr<S> basis_transform(GradTape<S>* t, const TensorPtr<S>& f, const TensorPtr<S>& y,
                             const TensorPtr<S>& eps, Activation act) {
  return ops::apply_activation(t, ops::channel_matvec(t, f, y, eps), act);
}

// ============================================================================
// Block
// ============================================================================

// Per-level encoder/decoder states; h[l] and z[l] each hold M / 2^l
// positions of [C, P] tensors, l = 0..L.
template <typename S>
struct LatentState {
  std::vector<std::vector<TensorPtr<S>>> h;
  std::vector<std::vector<TensorPtr<S>>> z;
};

// Optional per-weight additive corrections, indexed like the block's
// encoder/decoder weights.
template <typename S>
struct FusionEps {
  std::vector<std::vector<TensorPtr<S>>> enc;  // [l-1][j], l = 1..L
  std::vector<std::vector<TensorPtr<S>>> dec;  // [l][i],   l = 0..L-1
};

template <typename S>
struct GFMMForwardResult {
  TensorPtr<S> output;  // [c_out, D]
  LatentState<S> latent;
};

// One-dimensional GFMM block: binary encoder/decoder trees over M = 2^L leaf
// blocks of size P, with block-tridiagonal bridge operators at every level.
template <typename S>
class GFMMBlock1D {
 public:
  struct Bridge {
    std::vector<TensorPtr<S>> diag;   // (i, i),   m blocks
    std::vector<TensorPtr<S>> lower;  // (i+1, i), m-1 blocks
    std::vector<TensorPtr<S>> upper;  // (i, i+1), m-1 blocks
  };

  GFMMBlock1D() = default;

  explicit GFMMBlock1D(const GFMMConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    allocate();
  }

  GFMMBlock1D(const GFMMConfig& cfg, SeededRng& rng) : GFMMBlock1D(cfg) { init_uniform(rng); }

  const GFMMConfig& config() const { return cfg_; }

  // Uniform on [-1/sqrt(C_in P), 1/sqrt(C_in P)] per scalar, in enumeration
  // order: variance-preserving for the channel-summed block transforms
  // (reduces to 1/sqrt(P) in the single-channel case).
  void init_uniform(SeededRng& rng) {
    for_each_param([&](const std::string&, const TensorPtr<S>& w) {
      const double fan_in = static_cast<double>(w->in_channels() * cfg_.block_size());
      const double bound = 1.0 / std::sqrt(fan_in);
      for (Index k = 0; k < w->numel(); ++k) w->values()[k] = S(rng.uniform(-bound, bound));
    });
  }

  void set_zero() {
    for_each_param([](const std::string&, const TensorPtr<S>& w) { w->values().setZero(); });
  }

  TensorPtr<S>& encoder(int level, Index j) {  // level 1..L, j 0-based
    return enc_[static_cast<std::size_t>(level - 1)][static_cast<std::size_t>(j)];
  }
  TensorPtr<S>& decoder(int level, Index i) {  // level 0..L-1
    return dec_[static_cast<std::size_t>(level)][static_cast<std::size_t>(i)];
  }
  Bridge& bridge(int level) { return bridges_[static_cast<std::size_t>(level)]; }  // level 0..L
  const Bridge& bridge(int level) const { return bridges_[static_cast<std::size_t>(level)]; }

  Index encoder_count(int level) const { return cfg_.leaf_blocks() >> (level - 1); }
  Index decoder_count(int level) const { return cfg_.leaf_blocks() >> level; }
  Index bridge_positions(int level) const { return cfg_.leaf_blocks() >> level; }

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

  // Fresh block with copied weight values (tensors are not shared).
  GFMMBlock1D copy() const {
    GFMMBlock1D out(cfg_);
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
    const int L = cfg_.levels;
    for (int l = 1; l <= L; ++l)
      for (Index j = 0; j < encoder_count(l); ++j)
        fn("enc.l" + std::to_string(l) + ".j" + std::to_string(j),
           enc_[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(j)]);
    for (int l = 0; l < L; ++l)
      for (Index i = 0; i < decoder_count(l); ++i)
        fn("dec.l" + std::to_string(l) + ".i" + std::to_string(i),
           dec_[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)]);
    for (int l = 0; l <= L; ++l) {
      const auto& b = bridges_[static_cast<std::size_t>(l)];
      const std::string base = "bridge.l" + std::to_string(l);
      for (std::size_t i = 0; i < b.diag.size(); ++i) fn(base + ".d" + std::to_string(i), b.diag[i]);
      for (std::size_t i = 0; i < b.lower.size(); ++i) fn(base + ".lo" + std::to_string(i), b.lower[i]);
      for (std::size_t i = 0; i < b.upper.size(); ++i) fn(base + ".up" + std::to_string(i), b.upper[i]);
    }
  }

  // Block-tridiagonal product: out_i = sum_{|i-j| <= 1} B_(i,j) h_j.
  // The bridge products carry no activation.
  std::vector<TensorPtr<S>> bridge_apply(GradTape<S>* t, int level,
                                         const std::vector<TensorPtr<S>>& h) const {
    const auto& b = bridges_[static_cast<std::size_t>(level)];
    const Index m = static_cast<Index>(h.size());
    require(static_cast<Index>(b.diag.size()) == m, "bridge_apply: state length mismatch");
    std::vector<TensorPtr<S>> out(static_cast<std::size_t>(m));
    std::vector<TensorPtr<S>> terms;
    for (Index i = 0; i < m; ++i) {
      terms.clear();
      if (i > 0)
        terms.push_back(ops::channel_matvec(t, b.lower[static_cast<std::size_t>(i - 1)],
                                            h[static_cast<std::size_t>(i - 1)], TensorPtr<S>()));
      terms.push_back(ops::channel_matvec(t, b.diag[static_cast<std::size_t>(i)],
                                          h[static_cast<std::size_t>(i)], TensorPtr<S>()));
      if (i + 1 < m)
        terms.push_back(ops::channel_matvec(t, b.upper[static_cast<std::size_t>(i)],
                                            h[static_cast<std::size_t>(i + 1)], TensorPtr<S>()));
      out[static_cast<std::size_t>(i)] = ops::sum_list(t, terms);
    }
    return out;
  }

  // Forward pass: up-sweep through encoders, apex bridge, down-sweep through
  // decoders with per-level bridge additions. Returns the output and every
  // intermediate state.
  GFMMForwardResult<S> forward(GradTape<S>* t, const TensorPtr<S>& input,
                               const FusionEps<S>* fusion = nullptr) const {
    const Index p = cfg_.block_size();
    const Index m = cfg_.leaf_blocks();
    const int L = cfg_.levels;
    require(input->rank() == 2 && input->dim(0) == cfg_.c_in && input->dim(1) == cfg_.input_len,
            "gfmm forward: input must be [c_in, D]");
    if (fusion) validate_fusion(*fusion);

    LatentState<S> st;
    st.h.resize(static_cast<std::size_t>(L + 1));
    st.z.resize(static_cast<std::size_t>(L + 1));

    auto& h0 = st.h[0];
    h0.resize(static_cast<std::size_t>(m));
    for (Index j = 0; j < m; ++j) h0[static_cast<std::size_t>(j)] = ops::slice_cols(t, input, j * p, p);

    for (int l = 1; l <= L; ++l) {
      const Index ml = m >> l;
      auto& hl = st.h[static_cast<std::size_t>(l)];
      const auto& prev = st.h[static_cast<std::size_t>(l - 1)];
      hl.resize(static_cast<std::size_t>(ml));
      for (Index i = 0; i < ml; ++i) {
        auto left = basis_transform(
            t, enc_at(l, 2 * i), prev[static_cast<std::size_t>(2 * i)],
            fusion ? fusion->enc[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(2 * i)]
                   : TensorPtr<S>(),
            cfg_.activation);
        auto right = basis_transform(
            t, enc_at(l, 2 * i + 1), prev[static_cast<std::size_t>(2 * i + 1)],
            fusion ? fusion->enc[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(2 * i + 1)]
                   : TensorPtr<S>(),
            cfg_.activation);
        hl[static_cast<std::size_t>(i)] = ops::add(t, left, right);
      }
    }

    st.z[static_cast<std::size_t>(L)] = bridge_apply(t, L, st.h[static_cast<std::size_t>(L)]);

    for (int l = L - 1; l >= 0; --l) {
      const Index ml = m >> l;
      auto& zl = st.z[static_cast<std::size_t>(l)];
      const auto& znext = st.z[static_cast<std::size_t>(l + 1)];
      zl.resize(static_cast<std::size_t>(ml));
      for (Index i = 0; i < ml; ++i)
        zl[static_cast<std::size_t>(i)] =
            basis_transform(t, dec_at(l, i), znext[static_cast<std::size_t>(i / 2)],
                            fusion ? fusion->dec[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)]
                                   : TensorPtr<S>(),
                            cfg_.activation);
      auto bl = bridge_apply(t, l, st.h[static_cast<std::size_t>(l)]);
      for (Index i = 0; i < ml; ++i)
        zl[static_cast<std::size_t>(i)] = ops::add(t, zl[static_cast<std::size_t>(i)], bl[static_cast<std::size_t>(i)]);
    }

    GFMMForwardResult<S> res;
    res.output = ops::concat_cols(t, st.z[0]);
    res.latent = std::move(st);
    return res;
  }

 private:
  const TensorPtr<S>& enc_at(int level, Index j) const {
    return enc_[static_cast<std::size_t>(level - 1)][static_cast<std::size_t>(j)];
  }
  const TensorPtr<S>& dec_at(int level, Index i) const {
    return dec_[static_cast<std::size_t>(level)][static_cast<std::size_t>(i)];
  }

  void validate_fusion(const FusionEps<S>& f) const {
    const int L = cfg_.levels;
    require_config(static_cast<int>(f.enc.size()) == L && static_cast<int>(f.dec.size()) == L,
                   "fusion: level count does not cover the block");
    for (int l = 1; l <= L; ++l)
      require_config(static_cast<Index>(f.enc[static_cast<std::size_t>(l - 1)].size()) == encoder_count(l),
                     "fusion: encoder corrections do not cover level " + std::to_string(l));
    for (int l = 0; l < L; ++l)
      require_config(static_cast<Index>(f.dec[static_cast<std::size_t>(l)].size()) == decoder_count(l),
                     "fusion: decoder corrections do not cover level " + std::to_string(l));
  }

  static TensorPtr<S> weight(Index c_out, Index c_in, Index p) {
    if (c_out == 1 && c_in == 1) return make_tensor<S>({p, p});
    return make_tensor<S>({c_out, c_in, p, p});
  }

  void allocate() {
    const Index p = cfg_.block_size();
    const int L = cfg_.levels;
    enc_.resize(static_cast<std::size_t>(L));
    for (int l = 1; l <= L; ++l) {
      const Index c_from = (l == 1) ? cfg_.c_in : cfg_.c_hidden;
      auto& row = enc_[static_cast<std::size_t>(l - 1)];
      row.resize(static_cast<std::size_t>(encoder_count(l)));
      for (auto& w : row) w = weight(cfg_.c_hidden, c_from, p);
    }
    dec_.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      const Index c_to = (l == 0) ? cfg_.c_out : cfg_.c_hidden;
      auto& row = dec_[static_cast<std::size_t>(l)];
      row.resize(static_cast<std::size_t>(decoder_count(l)));
      for (auto& w : row) w = weight(c_to, cfg_.c_hidden, p);
    }
    bridges_.resize(static_cast<std::size_t>(L + 1));
    for (int l = 0; l <= L; ++l) {
      const Index ml = bridge_positions(l);
      const Index c_from = (l == 0) ? cfg_.c_in : cfg_.c_hidden;
      const Index c_to = (l == 0) ? cfg_.c_out : cfg_.c_hidden;
      auto& b = bridges_[static_cast<std::size_t>(l)];
      b.diag.resize(static_cast<std::size_t>(ml));
      b.lower.resize(static_cast<std::size_t>(ml - 1));
      b.upper.resize(static_cast<std::size_t>(ml - 1));
      for (auto& w : b.diag) w = weight(c_to, c_from, p);
      for (auto& w : b.lower) w = weight(c_to, c_from, p);
      for (auto& w : b.upper) w = weight(c_to, c_from, p);
    }
  }

  GFMMConfig cfg_;
  std::vector<std::vector<TensorPtr<S>>> enc_;  // [l-1][j]
  std::vector<std::vector<TensorPtr<S>>> dec_;  // [l][i]
  std::vector<Bridge> bridges_;                 // [l]
};

// Structural scalar count without allocating a block.
inline Index gfmm1d_param_count(const GFMMConfig& cfg) {
  cfg.validate();
  const Index p2 = cfg.block_size() * cfg.block_size();
  const Index m = cfg.leaf_blocks();
  Index n = 0;
  for (int l = 1; l <= cfg.levels; ++l) {
    const Index c_from = (l == 1) ? cfg.c_in : cfg.c_hidden;
    n += (m >> (l - 1)) * cfg.c_hidden * c_from * p2;
  }
  for (int l = 0; l < cfg.levels; ++l) {
    const Index c_to = (l == 0) ? cfg.c_out : cfg.c_hidden;
    n += (m >> l) * c_to * cfg.c_hidden * p2;
  }
  for (int l = 0; l <= cfg.levels; ++l) {
    const Index ml = m >> l;
    const Index c_from = (l == 0) ? cfg.c_in : cfg.c_hidden;
    const Index c_to = (l == 0) ? cfg.c_out : cfg.c_hidden;
    n += (3 * ml - 2) * c_to * c_from * p2;
  }
  return n;
}

// Dense D x D matrix of a linear single-channel block, built by applying the
// block to the canonical basis.
template <typename S>
Mat<S> assemble_dense(const GFMMBlock1D<S>& block) {
  const auto& cfg = block.config();
  if (!cfg.linear()) throw contract_error("assemble_dense: block must use the identity activation");
  if (cfg.c_in != 1 || cfg.c_out != 1) throw contract_error("assemble_dense: block must be single-channel");
  const Index d = cfg.input_len;
  Mat<S> g(d, d);
  auto e = make_tensor<S>({Index(1), d});
  for (Index j = 0; j < d; ++j) {
    e->values().setZero();
    e->values()[j] = S(1);
    auto out = block.forward(nullptr, e).output;
    g.col(j) = out->values();
  }
  return g;
}

}  // namespace gfmm
