#pragma once

#include "gfmm/datagen.hpp"
#include "gfmm/gfmm2d.hpp"
#include "gfmm/models.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace gfmm {

using json = nlohmann::json;

// Type-erased model surface used by the trainer, evaluator and checkpointing.
template <typename S>
class AnyModel {
 public:
  virtual ~AnyModel() = default;

  virtual TensorPtr<S> predict(GradTape<S>* t, const Sample<S>& s) const = 0;
  virtual std::vector<Param<S>> parameters() const = 0;
  virtual json describe() const = 0;
  virtual std::unique_ptr<AnyModel<S>> clone() const = 0;
  virtual bool linear() const = 0;

  // Dense matrix of the end-to-end map for linear single-input models.
  virtual Mat<S> assemble_dense_operator() const {
    throw unsupported_error("this model cannot be assembled into a dense operator");
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& p : parameters()) n += p.tensor->numel();
    return n;
  }
};

namespace detail {

inline std::vector<std::string> names_from_json(const json& j) {
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(v.get<std::string>());
  return out;
}

inline ChannelSpec channel_spec_from_json(const json& names, const json& model_spec) {
  ChannelSpec spec;
  spec.fields = names_from_json(names);
  if (model_spec.contains("input_scale")) {
    const json& js = model_spec.at("input_scale");
    spec.scales.assign(spec.fields.size(), 1.0);
    for (std::size_t k = 0; k < spec.fields.size(); ++k)
      if (js.contains(spec.fields[k])) spec.scales[k] = js.at(spec.fields[k]).get<double>();
  }
  spec.validate();
  return spec;
}

}  // namespace detail

// ============================================================================
// UNO wrapper
// ============================================================================

template <typename S>
class UnoAnyModel final : public AnyModel<S> {
 public:
  UnoAnyModel(UnoModel<S> model, json spec) : model_(std::move(model)), spec_(std::move(spec)) {}

  const UnoModel<S>& model() const { return model_; }

  TensorPtr<S> predict(GradTape<S>* t, const Sample<S>& s) const override {
    return model_.forward(t, s.fields).u;
  }

  std::vector<Param<S>> parameters() const override {
    std::vector<Param<S>> out;
    model_.collect_params("", out);
    return out;
  }

  json describe() const override { return spec_; }

  std::unique_ptr<AnyModel<S>> clone() const override {
    std::vector<GFMMBlock1D<S>> blocks;
    for (const auto& b : model_.blocks()) blocks.push_back(b.copy());
    return std::make_unique<UnoAnyModel<S>>(UnoModel<S>(model_.inputs(), std::move(blocks)), spec_);
  }

  bool linear() const override { return model_.linear(); }

  Mat<S> assemble_dense_operator() const override { return assemble_dense(model_); }

 private:
  UnoModel<S> model_;
  json spec_;
};

// ============================================================================
// MNO wrapper
// ============================================================================

template <typename S>
class MnoAnyModel final : public AnyModel<S> {
 public:
  MnoAnyModel(MnoModel<S> model, json spec) : model_(std::move(model)), spec_(std::move(spec)) {}

  const MnoModel<S>& model() const { return model_; }
  MnoModel<S>& model() { return model_; }

  TensorPtr<S> predict(GradTape<S>* t, const Sample<S>& s) const override {
    return model_.forward(t, s.fields);
  }

  std::vector<Param<S>> parameters() const override {
    std::vector<Param<S>> out;
    model_.collect_params("", out);
    return out;
  }

  json describe() const override { return spec_; }

  std::unique_ptr<AnyModel<S>> clone() const override {
    std::vector<GFMMBlock1D<S>> cb, rb;
    for (const auto& b : model_.coeff_blocks()) cb.push_back(b.copy());
    for (const auto& b : model_.rhs_blocks()) rb.push_back(b.copy());
    std::vector<bool> fusion = model_.fusion_flags();
    return std::make_unique<MnoAnyModel<S>>(
        MnoModel<S>(model_.coeff_inputs(), std::move(cb), model_.rhs_inputs(), std::move(rb), std::move(fusion)),
        spec_);
  }

  bool linear() const override { return false; }

 private:
  MnoModel<S> model_;
  json spec_;
};

// ============================================================================
// 2D wrapper (single block, predictions flattened to match sample storage)
// ============================================================================

template <typename S>
class Gfmm2dAnyModel final : public AnyModel<S> {
 public:
  Gfmm2dAnyModel(GFMMBlock2D<S> block, json spec) : block_(std::move(block)), spec_(std::move(spec)) {}

  const GFMMBlock2D<S>& block() const { return block_; }

  TensorPtr<S> predict(GradTape<S>* t, const Sample<S>& s) const override {
    const Index n = block_.config().grid_side;
    const auto& c = s.fields.at("c");
    require(c.size() == n * n, "gfmm2d: field 'c' does not match the grid");
    auto input = make_tensor<S>({n, n}, c);
    auto out = block_.forward(t, input);
    return ops::reshape(t, out, {n * n});
  }

  std::vector<Param<S>> parameters() const override {
    std::vector<Param<S>> out;
    block_.collect_params("", out);
    return out;
  }

  json describe() const override { return spec_; }

  std::unique_ptr<AnyModel<S>> clone() const override {
    return std::make_unique<Gfmm2dAnyModel<S>>(block_.copy(), spec_);
  }

  bool linear() const override { return block_.config().linear(); }

  Mat<S> assemble_dense_operator() const override { return assemble_dense(block_); }

 private:
  GFMMBlock2D<S> block_;
  json spec_;
};

// ============================================================================
// Building models from a structured spec
// ============================================================================

namespace detail {

inline Index block_levels(const json& b) {
  if (!b.contains("levels")) throw config_error("model.blocks[]: missing 'levels'");
  return b.at("levels").get<Index>();
}

template <typename S>
GFMMBlock1D<S> build_block(Index grid, const json& b, Index c_in, Index c_hidden, Index c_out,
                           SeededRng& rng) {
  GFMMConfig cfg;
  cfg.input_len = grid;
  cfg.levels = static_cast<int>(block_levels(b));
  cfg.c_in = c_in;
  cfg.c_hidden = c_hidden;
  cfg.c_out = c_out;
  cfg.activation = activation_from_string(b.value("activation", "identity"));
  cfg.validate();
  return GFMMBlock1D<S>(cfg, rng);
}

}  // namespace detail

// Allocates and initializes a model from its structured spec. The grid size
// comes from the problem; block sizes P are derived as grid / 2^levels.
template <typename S>
std::unique_ptr<AnyModel<S>> build_model(const json& spec, Index grid, SeededRng& rng) {
  const std::string kind = spec.value("kind", "");
  if (kind == "uno") {
    auto inputs = detail::channel_spec_from_json(spec.at("inputs"), spec);
    require_config(inputs.channels() >= 1, "model.inputs: at least one input field required");
    const auto& jblocks = spec.at("blocks");
    require_config(jblocks.is_array() && !jblocks.empty(), "model.blocks: non-empty array required");
    std::vector<GFMMBlock1D<S>> blocks;
    Index c_prev = inputs.channels();
    for (std::size_t k = 0; k < jblocks.size(); ++k) {
      const auto& jb = jblocks[k];
      const Index hidden = jb.value("hidden", Index(1));
      const bool last = (k + 1 == jblocks.size());
      const Index out = jb.value("out", last ? Index(1) : hidden);
      blocks.push_back(detail::build_block<S>(grid, jb, c_prev, hidden, out, rng));
      c_prev = out;
    }
    return std::make_unique<UnoAnyModel<S>>(UnoModel<S>(std::move(inputs), std::move(blocks)), spec);
  }
  if (kind == "mno") {
    auto coeff_in = detail::channel_spec_from_json(spec.at("coeff_inputs"), spec);
    auto rhs_in = detail::channel_spec_from_json(spec.at("rhs_inputs"), spec);
    const auto& jcoeff = spec.at("coeff_blocks");
    const auto& jrhs = spec.at("rhs_blocks");
    require_config(jcoeff.is_array() && jrhs.is_array() && jcoeff.size() == jrhs.size() && !jcoeff.empty(),
                   "model: coeff_blocks and rhs_blocks must be equally sized non-empty arrays");
    std::vector<GFMMBlock1D<S>> cb, rb;
    Index c_prev = coeff_in.channels();
    // Damping the coefficient branch's starting weights keeps the additive
    // weight corrections small until training grows them; fused linear
    // blocks are unstable otherwise.
    const double coeff_gain = spec.value("coeff_init_gain", 1.0);
    for (std::size_t k = 0; k < jcoeff.size(); ++k) {
      const auto& jb = jcoeff[k];
      const Index levels = detail::block_levels(jb);
      const Index p = grid >> levels;
      if (jb.contains("hidden") && jb.at("hidden").get<Index>() != p)
        throw config_error("model.coeff_blocks[" + std::to_string(k) +
                           "].hidden: coefficient branch width is fixed to P = " + std::to_string(p));
      cb.push_back(detail::build_block<S>(grid, jb, c_prev, p, p, rng));
      if (coeff_gain != 1.0)
        for (auto& w : cb.back().all_weights()) w->values() *= S(coeff_gain);
      c_prev = p;
    }
    Index r_prev = rhs_in.channels();
    for (std::size_t k = 0; k < jrhs.size(); ++k) {
      const auto& jb = jrhs[k];
      const Index hidden = jb.value("hidden", Index(1));
      const bool last = (k + 1 == jrhs.size());
      const Index out = jb.value("out", last ? Index(1) : hidden);
      rb.push_back(detail::build_block<S>(grid, jb, r_prev, hidden, out, rng));
      r_prev = out;
    }
    std::vector<bool> fusion;
    if (spec.contains("fusion_on_block"))
      for (const auto& v : spec.at("fusion_on_block")) fusion.push_back(v.get<bool>());
    return std::make_unique<MnoAnyModel<S>>(
        MnoModel<S>(std::move(coeff_in), std::move(cb), std::move(rhs_in), std::move(rb), std::move(fusion)),
        spec);
  }
  if (kind == "gfmm2d") {
    typename GFMMBlock2D<S>::Config cfg;
    cfg.grid_side = spec.at("grid_side").get<Index>();
    cfg.block_side = spec.at("block_side").get<Index>();
    cfg.levels = spec.at("levels").get<int>();
    cfg.activation = activation_from_string(spec.value("activation", "identity"));
    cfg.validate();
    return std::make_unique<Gfmm2dAnyModel<S>>(GFMMBlock2D<S>(cfg, rng), spec);
  }
  throw config_error("model.kind: expected 'uno', 'mno' or 'gfmm2d', got '" + kind + "'");
}

}  // namespace gfmm
