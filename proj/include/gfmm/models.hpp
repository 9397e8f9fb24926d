#pragma once

#include "gfmm/gfmm1d.hpp"

#include <map>
#include <string>
#include <vector>

namespace gfmm {

// Named input fields in channel order, each with a fixed input gain applied
// when the channel is stacked (feature normalization; 1 when unspecified).
// Length-1 fields broadcast to the grid.
struct ChannelSpec {
  std::vector<std::string> fields;
  std::vector<double> scales;  // empty or parallel to fields

  Index channels() const { return static_cast<Index>(fields.size()); }
  double scale(std::size_t k) const { return scales.empty() ? 1.0 : scales[k]; }

  void validate() const {
    require_config(scales.empty() || scales.size() == fields.size(),
                   "channel spec: scales must pair with fields");
  }
};

// Stacks the named fields into a [C, D] input tensor. Fields are constants
// (leaves); gradients flow only into weights.
template <typename S>
TensorPtr<S> stack_fields(GradTape<S>* t, const ChannelSpec& spec,
                          const std::map<std::string, Vec<S>>& fields, Index grid) {
  std::vector<TensorPtr<S>> rows;
  rows.reserve(spec.fields.size());
  for (std::size_t k = 0; k < spec.fields.size(); ++k) {
    const auto& name = spec.fields[k];
    auto it = fields.find(name);
    if (it == fields.end()) throw dimension_error("missing input field '" + name + "'");
    const S gain = S(spec.scale(k));
    if (it->second.size() == 1) {
      rows.push_back(make_vector<S>(Vec<S>::Constant(grid, gain * it->second[0])));
    } else {
      require(it->second.size() == grid, "field '" + name + "' does not match the grid");
      rows.push_back(make_vector<S>(Vec<S>(gain * it->second)));
    }
  }
  return ops::stack_rows(t, rows);
}

// Reinterprets a [C, P] latent as a P x P additive weight correction
// (channel index = row). Same flat data, no rearrangement.
template <typename S>
TensorPtr<S> latent_to_epsilon(GradTape<S>* t, const TensorPtr<S>& h) {
  require(h->rank() == 2, "latent_to_epsilon: latent must be [C, P]");
  const Index p = h->dim(1);
  require_config(h->dim(0) == p, "latent_to_epsilon: latent channel count must equal P");
  return ops::reshape(t, h, {p, p});
}

// ============================================================================
// UNO: a sequential stack of GFMM blocks
// ============================================================================

template <typename S>
struct UnoForwardResult {
  TensorPtr<S> u;  // [D]
  std::vector<LatentState<S>> latents;  // one per block
};

template <typename S>
class UnoModel {
 public:
  UnoModel() = default;
  UnoModel(ChannelSpec inputs, std::vector<GFMMBlock1D<S>> blocks)
      : inputs_(std::move(inputs)), blocks_(std::move(blocks)) {
    validate();
  }

  const ChannelSpec& inputs() const { return inputs_; }
  const std::vector<GFMMBlock1D<S>>& blocks() const { return blocks_; }
  std::vector<GFMMBlock1D<S>>& blocks() { return blocks_; }
  Index grid() const { return blocks_.front().config().input_len; }

  void validate() const {
    require_config(!blocks_.empty(), "uno: at least one block required");
    require_config(blocks_.front().config().c_in == inputs_.channels(),
                   "uno: first block input channels must match the channel spec");
    for (std::size_t k = 0; k + 1 < blocks_.size(); ++k)
      require_config(blocks_[k].config().c_out == blocks_[k + 1].config().c_in,
                     "uno: adjacent blocks have incompatible channel counts");
    for (const auto& b : blocks_)
      require_config(b.config().input_len == blocks_.front().config().input_len,
                     "uno: all blocks must share the grid size");
    require_config(blocks_.back().config().c_out == 1, "uno: final block must emit one channel");
  }

  UnoForwardResult<S> forward(GradTape<S>* t, const std::map<std::string, Vec<S>>& fields) const {
    auto x = stack_fields(t, inputs_, fields, grid());
    UnoForwardResult<S> res;
    for (const auto& b : blocks_) {
      auto r = b.forward(t, x);
      x = r.output;
      res.latents.push_back(std::move(r.latent));
    }
    res.u = ops::row(t, x, 0);
    return res;
  }

  void collect_params(const std::string& prefix, std::vector<Param<S>>& out) const {
    for (std::size_t k = 0; k < blocks_.size(); ++k)
      blocks_[k].collect_params(prefix + "block" + std::to_string(k) + ".", out);
  }

  bool linear() const {
    for (const auto& b : blocks_)
      if (!b.config().linear()) return false;
    return true;
  }

 private:
  ChannelSpec inputs_;
  std::vector<GFMMBlock1D<S>> blocks_;
};

// End-to-end dense matrix of a linear single-input UNO.
template <typename S>
Mat<S> assemble_dense(const UnoModel<S>& model) {
  if (!model.linear()) throw unsupported_error("assemble_dense: model must use identity activations");
  if (model.inputs().channels() != 1)
    throw unsupported_error("assemble_dense: model must take a single input field");
  const Index d = model.grid();
  Mat<S> g(d, d);
  std::map<std::string, Vec<S>> fields;
  for (Index j = 0; j < d; ++j) {
    Vec<S> e = Vec<S>::Zero(d);
    e[j] = S(1);
    fields[model.inputs().fields[0]] = e;
    g.col(j) = model.forward(nullptr, fields).u->values();
  }
  return g;
}

// ============================================================================
// MNO: coefficient branch fused into an RHS branch
// ============================================================================

template <typename S>
class MnoModel {
 public:
  MnoModel() = default;
  MnoModel(ChannelSpec coeff_inputs, std::vector<GFMMBlock1D<S>> coeff_blocks, ChannelSpec rhs_inputs,
           std::vector<GFMMBlock1D<S>> rhs_blocks, std::vector<bool> fusion_on_block = {})
      : coeff_inputs_(std::move(coeff_inputs)),
        rhs_inputs_(std::move(rhs_inputs)),
        coeff_blocks_(std::move(coeff_blocks)),
        rhs_blocks_(std::move(rhs_blocks)),
        fusion_on_block_(std::move(fusion_on_block)) {
    if (fusion_on_block_.empty()) fusion_on_block_.assign(rhs_blocks_.size(), true);
    validate();
  }

  const std::vector<GFMMBlock1D<S>>& coeff_blocks() const { return coeff_blocks_; }
  const std::vector<GFMMBlock1D<S>>& rhs_blocks() const { return rhs_blocks_; }
  std::vector<GFMMBlock1D<S>>& coeff_blocks() { return coeff_blocks_; }
  std::vector<GFMMBlock1D<S>>& rhs_blocks() { return rhs_blocks_; }
  const ChannelSpec& coeff_inputs() const { return coeff_inputs_; }
  const ChannelSpec& rhs_inputs() const { return rhs_inputs_; }
  const std::vector<bool>& fusion_flags() const { return fusion_on_block_; }
  void set_fusion_flags(std::vector<bool> f) {
    require_config(f.size() == rhs_blocks_.size(), "mno: fusion flag count must match rhs blocks");
    fusion_on_block_ = std::move(f);
  }
  Index grid() const { return rhs_blocks_.front().config().input_len; }

  void validate() const {
    require_config(!coeff_blocks_.empty() && !rhs_blocks_.empty(), "mno: both branches need blocks");
    require_config(coeff_blocks_.size() == rhs_blocks_.size(),
                   "mno: branch pairing is positional, branches must have equal length");
    require_config(fusion_on_block_.size() == rhs_blocks_.size(),
                   "mno: fusion flag count must match rhs blocks");
    require_config(coeff_blocks_.front().config().c_in == coeff_inputs_.channels(),
                   "mno: coefficient branch input channels must match its spec");
    require_config(rhs_blocks_.front().config().c_in == rhs_inputs_.channels(),
                   "mno: rhs branch input channels must match its spec");
    require_config(rhs_blocks_.back().config().c_out == 1, "mno: final rhs block must emit one channel");
    for (std::size_t k = 0; k < coeff_blocks_.size(); ++k) {
      const auto& cc = coeff_blocks_[k].config();
      const auto& rc = rhs_blocks_[k].config();
      require_config(cc.c_hidden == cc.block_size(),
                     "mno: coefficient branch hidden width must equal the block size P");
      require_config(cc.c_out == cc.block_size(),
                     "mno: coefficient branch output width must equal the block size P");
      require_config(cc.input_len == rc.input_len && cc.levels == rc.levels,
                     "mno: paired blocks must share grid size and depth");
      if (k + 1 < coeff_blocks_.size())
        require_config(coeff_blocks_[k].config().c_out == coeff_blocks_[k + 1].config().c_in,
                       "mno: adjacent coefficient blocks have incompatible channels");
      if (k + 1 < rhs_blocks_.size())
        require_config(rhs_blocks_[k].config().c_out == rhs_blocks_[k + 1].config().c_in,
                       "mno: adjacent rhs blocks have incompatible channels");
    }
  }

  // Builds the weight corrections for rhs block k out of coefficient block
  // k's latents: encoder weight (l, j) reads the encoder state feeding its
  // destination node h^l_ceil(j/2); decoder weight (l, i) reads the decoder
  // state z^l_i at the same level and position.
  FusionEps<S> fusion_for_block(GradTape<S>* t, const LatentState<S>& latent, std::size_t k) const {
    const auto& cfg = rhs_blocks_[k].config();
    const int L = cfg.levels;
    FusionEps<S> f;
    f.enc.resize(static_cast<std::size_t>(L));
    f.dec.resize(static_cast<std::size_t>(L));
    for (int l = 1; l <= L; ++l) {
      const Index nj = rhs_blocks_[k].encoder_count(l);
      auto& row = f.enc[static_cast<std::size_t>(l - 1)];
      row.resize(static_cast<std::size_t>(nj));
      for (Index j = 0; j < nj; ++j) {
        const auto& h = latent.h[static_cast<std::size_t>(l)][static_cast<std::size_t>(j / 2)];
        row[static_cast<std::size_t>(j)] = latent_to_epsilon(t, h);
      }
    }
    for (int l = 0; l < L; ++l) {
      const Index ni = rhs_blocks_[k].decoder_count(l);
      auto& row = f.dec[static_cast<std::size_t>(l)];
      row.resize(static_cast<std::size_t>(ni));
      for (Index i = 0; i < ni; ++i) {
        const auto& z = latent.z[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)];
        row[static_cast<std::size_t>(i)] = latent_to_epsilon(t, z);
      }
    }
    return f;
  }

  TensorPtr<S> forward(GradTape<S>* t, const std::map<std::string, Vec<S>>& fields) const {
    // Coefficient branch, collecting latents per block.
    auto x = stack_fields(t, coeff_inputs_, fields, grid());
    std::vector<LatentState<S>> latents;
    latents.reserve(coeff_blocks_.size());
    for (const auto& b : coeff_blocks_) {
      auto r = b.forward(t, x);
      x = r.output;
      latents.push_back(std::move(r.latent));
    }
    // RHS branch with per-block weight corrections.
    auto y = stack_fields(t, rhs_inputs_, fields, grid());
    for (std::size_t k = 0; k < rhs_blocks_.size(); ++k) {
      if (fusion_on_block_[k]) {
        auto f = fusion_for_block(t, latents[k], k);
        y = rhs_blocks_[k].forward(t, y, &f).output;
      } else {
        y = rhs_blocks_[k].forward(t, y).output;
      }
    }
    return ops::row(t, y, 0);
  }

  void collect_params(const std::string& prefix, std::vector<Param<S>>& out) const {
    for (std::size_t k = 0; k < coeff_blocks_.size(); ++k)
      coeff_blocks_[k].collect_params(prefix + "coeff.block" + std::to_string(k) + ".", out);
    for (std::size_t k = 0; k < rhs_blocks_.size(); ++k)
      rhs_blocks_[k].collect_params(prefix + "rhs.block" + std::to_string(k) + ".", out);
  }

 private:
  ChannelSpec coeff_inputs_, rhs_inputs_;
  std::vector<GFMMBlock1D<S>> coeff_blocks_, rhs_blocks_;
  std::vector<bool> fusion_on_block_;
};

}  // namespace gfmm
