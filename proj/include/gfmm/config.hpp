#pragma once

#include "gfmm/datagen.hpp"
#include "gfmm/model.hpp"
#include "gfmm/train.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace gfmm {

// Run configuration: a validated JSON document with dotted-path overrides.
// Blocks: problem { type, grid, ... }, model { kind, ... }, train { ... },
// eval { ... }, io { out_dir }.
struct RunConfig {
  json root;

  static RunConfig load_file(const std::string& path);
  static RunConfig from_json(json j);

  std::string precision() const { return root.at("train").value("precision", "f32"); }
  std::string problem_type() const { return root.at("problem").at("type").get<std::string>(); }
  Index grid() const { return root.at("problem").at("grid").get<Index>(); }
  std::string out_dir() const { return root.contains("io") ? root.at("io").value("out_dir", "out") : "out"; }
  json model_spec() const { return root.at("model"); }
};

// Parses "a.b.c=value"; the value is JSON when it parses, a string otherwise.
void apply_override(json& root, const std::string& assignment);

// Structural validation with field-path error messages (throws config_error).
void validate_run_config(const json& root);

// Reads the dtype of a checkpoint without loading it.
std::string peek_checkpoint_dtype(const std::string& path);

// ============================================================================
// Typed builders
// ============================================================================

inline SamplingScheme parse_scheme(const json& js) {
  SamplingScheme s;
  const std::string kind = js.value("kind", "solution");
  if (kind == "solution")
    s.kind = SchemeKind::solution;
  else if (kind == "rhs")
    s.kind = SchemeKind::rhs;
  else
    throw config_error("scheme.kind: expected 'solution' or 'rhs', got '" + kind + "'");
  s.basis_size = js.value("basis", 16);
  const std::string mode = js.value("mode", "single_basis");
  if (mode == "single_basis")
    s.mode = BasisMode::single_basis;
  else if (mode == "combination")
    s.mode = BasisMode::combination;
  else
    throw config_error("scheme.mode: expected 'single_basis' or 'combination', got '" + mode + "'");
  s.validate();
  return s;
}

inline CoeffDist parse_coeff_dist(const std::string& s) {
  if (s == "mixture") return CoeffDist::mixture;
  if (s == "quadratic") return CoeffDist::quadratic;
  if (s == "lognormal") return CoeffDist::lognormal;
  throw config_error("coefficient.distribution: unknown value '" + s + "'");
}

inline BvpDist parse_bvp_dist(const std::string& s) {
  if (s == "train") return BvpDist::train;
  if (s == "unit_normal") return BvpDist::unit_normal;
  throw config_error("problem.distribution: unknown value '" + s + "'");
}

template <typename S>
Problem<S> build_problem(const json& jp) {
  const std::string type = jp.at("type").get<std::string>();
  const Index grid = jp.at("grid").get<Index>();
  require_config(grid >= 1, "problem.grid must be >= 1");
  if (type == "poisson1d") return PoissonProblem<S>{Grid1D<S>{grid}};
  if (type == "darcy1d") {
    DarcyProblem<S> p;
    p.op = DarcyOperator<S>{Grid1D<S>{grid}, S(jp.value("u0", 0.0)), S(jp.value("u1", 0.0))};
    const json jc = jp.value("coefficient", json::object());
    const std::string mm = jc.value("mixture_mode", "mixture");
    const std::string ku = jc.value("kernel_units", "index");
    require_config(mm == "mixture" || mm == "average", "coefficient.mixture_mode: 'mixture' or 'average'");
    require_config(ku == "index" || ku == "coordinate", "coefficient.kernel_units: 'index' or 'coordinate'");
    p.coeff = std::make_shared<DarcyCoefficientSampler<S>>(
        Grid1D<S>{grid}, mm == "mixture" ? MixtureMode::mixture : MixtureMode::average,
        ku == "index" ? KernelUnits::index : KernelUnits::coordinate);
    p.dist = parse_coeff_dist(jc.value("distribution", "mixture"));
    return p;
  }
  if (type == "bvp1d") {
    NonlinearBVPProblem<S> p;
    p.op = BvpOperator<S>{Grid1D<S>{grid}};
    p.dist = parse_bvp_dist(jp.value("distribution", "train"));
    return p;
  }
  if (type == "poisson2d") {
    Poisson2DProblem<S> p;
    p.grid = Grid2D<S>{grid};
    p.solver = std::make_shared<Poisson2dSolver>(grid);
    return p;
  }
  throw config_error("problem.type: unknown value '" + type + "'");
}

inline TrainSettings parse_train(const json& jt) {
  TrainSettings t;
  t.iterations = jt.value("iterations", std::int64_t(0));
  t.batch = jt.value("batch", Index(1));
  t.lr.initial = jt.value("lr", 1e-3);
  if (jt.contains("lr_drops"))
    for (const auto& d : jt.at("lr_drops"))
      t.lr.drops.emplace_back(d.at(0).get<std::int64_t>(), d.at(1).get<double>());
  t.adam.lr = t.lr.initial;
  t.adam.beta1 = jt.value("beta1", 0.9);
  t.adam.beta2 = jt.value("beta2", 0.999);
  t.adam.eps = jt.value("adam_eps", 1e-8);
  t.seed = jt.value("seed", std::uint64_t(0));
  t.eval_cadence = jt.value("eval_cadence", std::int64_t(500));
  t.val_samples = jt.value("val_samples", Index(1000));
  t.val_seed = jt.value("val_seed", std::uint64_t(0x76a1));
  if (jt.contains("val_scheme")) t.val_scheme = parse_scheme(jt.at("val_scheme"));
  t.workers = jt.value("workers", 1);
  t.validate();
  return t;
}

}  // namespace gfmm
