#include "gfmm/commands.hpp"

#include "gfmm/config.hpp"
#include "gfmm/dataset.hpp"
#include "gfmm/gradcheck.hpp"
#include "gfmm/train.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace gfmm {

namespace fs = std::filesystem;

namespace {

RunConfig resolve_config(const CommonOpts& opts) {
  std::ifstream in(opts.config_path);
  if (!in) throw config_error("cannot open config file: " + opts.config_path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw config_error("config file is not valid JSON: " + opts.config_path);
  for (const auto& ov : opts.overrides) apply_override(j, ov);
  if (opts.seed) j["train"]["seed"] = *opts.seed;
  if (opts.out) j["io"]["out_dir"] = *opts.out;
  return RunConfig::from_json(std::move(j));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw integrity_error("cannot write file: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const config_error*>(&e)) return kExitConfig;
  if (dynamic_cast<const unsupported_error*>(&e)) return kExitConfig;
  if (dynamic_cast<const numerical_error*>(&e)) return kExitNumerical;
  if (dynamic_cast<const integrity_error*>(&e)) return kExitIntegrity;
  return 1;
}

template <typename F>
int guarded(F&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

// ============================================================================
// train
// ============================================================================

template <typename S>
int run_train(const RunConfig& cfg) {
  const fs::path out_dir(cfg.out_dir());
  fs::create_directories(out_dir);

  const json& jt = cfg.root.at("train");
  auto problem = build_problem<S>(cfg.root.at("problem"));
  auto settings = parse_train(jt);
  const SamplingScheme scheme = jt.contains("scheme") ? parse_scheme(jt.at("scheme")) : SamplingScheme{};

  SeededRng rng(settings.seed);
  auto model = build_model<S>(cfg.model_spec(), cfg.grid(), rng);
  AdamState<S> adam(settings.adam);

  std::cout << "model parameters: " << model->parameter_count() << "\n";

  std::vector<MetricsRecord> log;
  try {
    log = train_loop(*model, adam, problem, scheme, settings, rng);
  } catch (const numerical_error&) {
    save_checkpoint(
        (out_dir / "checkpoint.diagnostic.gfmm").string(), *model, &adam, -1, cfg.grid(), rng,
        json{{"diagnostic", "aborted on non-finite loss"}});
    throw;
  }

  write_text(out_dir / "metrics.csv", metrics_csv(log));
  save_checkpoint((out_dir / "checkpoint.gfmm").string(), *model, &adam, settings.iterations, cfg.grid(), rng);
  write_text(out_dir / "config.resolved.json", cfg.root.dump(2) + "\n");
  if (!log.empty()) {
    const auto& last = log.back();
    std::cout << "final: iteration=" << last.iteration << " loss=" << format_metric(last.loss);
    if (last.rel) std::cout << " eps_rel=" << format_metric(*last.rel);
    if (last.be) std::cout << " eps_be=" << format_metric(*last.be);
    if (last.res_int) std::cout << " eps_res_int=" << format_metric(*last.res_int);
    std::cout << "\n";
  }
  std::cout << "artifacts written to " << out_dir.string() << "\n";
  return kExitOk;
}

// ============================================================================
// eval
// ============================================================================

struct EvalRow {
  std::string scheme, mode, distribution;
};

template <typename S>
Problem<S> problem_with_distribution(const RunConfig& cfg, const std::string& dist) {
  json jp = cfg.root.at("problem");
  if (jp.at("type") == "darcy1d" && dist != "-") jp["coefficient"]["distribution"] = dist;
  if (jp.at("type") == "bvp1d" && dist != "-") jp["distribution"] = dist;
  return build_problem<S>(jp);
}

std::vector<EvalRow> eval_rows(const RunConfig& cfg, const json& je) {
  std::vector<EvalRow> rows;
  if (je.contains("rows")) {
    for (const auto& r : je.at("rows"))
      rows.push_back({r.value("scheme", "solution"), r.value("mode", "single_basis"),
                      r.value("distribution", "-")});
    return rows;
  }
  std::vector<std::string> dists{"-"};
  const std::string type = cfg.problem_type();
  if (type == "darcy1d") dists = {"mixture", "quadratic", "lognormal"};
  if (type == "bvp1d") dists = {"train", "unit_normal"};
  for (const std::string scheme : {"solution", "rhs"})
    for (const std::string mode : {"single_basis", "combination"})
      for (const auto& d : dists) rows.push_back({scheme, mode, d});
  return rows;
}

template <typename S>
int run_eval(const RunConfig& cfg, const std::string& checkpoint_path, bool oracle, bool fusion_off) {
  auto loaded = load_checkpoint<S>(checkpoint_path);
  if (loaded.grid != cfg.grid())
    throw config_error("checkpoint grid " + std::to_string(loaded.grid) +
                       " does not match problem.grid " + std::to_string(cfg.grid()));
  if (fusion_off) {
    auto* mno = dynamic_cast<MnoAnyModel<S>*>(loaded.model.get());
    if (!mno) throw config_error("--fusion-off applies only to MNO checkpoints");
    mno->model().set_fusion_flags(std::vector<bool>(mno->model().rhs_blocks().size(), false));
  }

  const json je = cfg.root.value("eval", json::object());
  const Index samples = je.value("samples", Index(1000));
  const int basis = je.value("basis", 16);
  const std::uint64_t eval_seed = je.value("seed", std::uint64_t(0xe7a1));

  std::string csv = "scheme,mode,distribution,samples,eps_rel,eps_be,eps_res_int,eps_res_bnd\n";
  const auto rows = eval_rows(cfg, je);
  std::size_t row_idx = 0;
  for (const auto& row : rows) {
    json js{{"kind", row.scheme}, {"mode", row.mode}, {"basis", basis}};
    const SamplingScheme scheme = parse_scheme(js);
    auto problem = problem_with_distribution<S>(cfg, row.distribution);
    const auto batch =
        make_validation_set(problem, scheme, samples, SeededRng::derive_seed(eval_seed, row_idx++));
    const auto norm_a = problem_operator_norm(problem);

    std::vector<Vec<S>> preds(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (oracle) {
        preds[i] = batch[i].target ? *batch[i].target : Vec<S>::Zero(problem_grid_size(problem));
      } else {
        preds[i] = loaded.model->predict(nullptr, batch[i])->values();
      }
    }
    const auto m = aggregate_metrics(problem, batch, preds, norm_a);
    auto cell = [](const std::optional<double>& v) { return v ? format_metric(*v) : std::string(); };
    csv += row.scheme + "," + row.mode + "," + row.distribution + "," + std::to_string(batch.size()) + "," +
           cell(m.rel) + "," + cell(m.be) + "," + cell(m.res_int) + "," + cell(m.res_bnd) + "\n";
  }

  std::cout << csv;
  const fs::path out_dir(cfg.out_dir());
  fs::create_directories(out_dir);
  write_text(out_dir / "eval.csv", csv);
  return kExitOk;
}

// ============================================================================
// gradcheck
// ============================================================================

int run_gradcheck(const RunConfig& cfg, int probes) {
  using S = double;  // gradient checks always run in 64-bit
  auto problem = build_problem<S>(cfg.root.at("problem"));
  const json& jt = cfg.root.at("train");
  const SamplingScheme scheme = jt.contains("scheme") ? parse_scheme(jt.at("scheme")) : SamplingScheme{};
  const std::uint64_t seed = jt.value("seed", std::uint64_t(0));

  SeededRng rng(seed);
  auto model = build_model<S>(cfg.model_spec(), cfg.grid(), rng);
  const auto params = model->parameters();

  SeededRng data_rng(SeededRng::derive_seed(seed, 0x9c));
  const Batch<S> batch = make_batch(problem, scheme, 2, data_rng);

  auto loss_fn = [&](GradTape<S>* t) {
    std::vector<TensorPtr<S>> losses;
    for (const auto& s : batch) {
      auto pred = model->predict(t, s);
      losses.push_back(mse_loss(t, pred, make_vector<S>(*s.target)));
    }
    return ops::scale(t, ops::sum_list(t, losses), 1.0 / static_cast<double>(losses.size()));
  };

  SeededRng probe_rng(SeededRng::derive_seed(seed, 0x6d));
  const auto rep = grad_check<S>(loss_fn, params, probes, 1e-6, probe_rng);
  const bool pass = rep.max_rel_err <= 1e-5;
  std::cout << "gradcheck: probes=" << rep.probes << " max_rel_err=" << format_metric(rep.max_rel_err)
            << " threshold=1e-05 -> " << (pass ? "PASS" : "FAIL") << "\n";
  if (!pass)
    std::cout << "worst parameter: " << rep.worst_param << "[" << rep.worst_index
              << "] tape=" << format_metric(rep.worst_tape) << " fd=" << format_metric(rep.worst_fd) << "\n";
  return pass ? kExitOk : kExitNumerical;
}

// ============================================================================
// gen-data
// ============================================================================

template <typename S>
int run_gen_data(const RunConfig& cfg, std::int64_t count, const std::string& out_file, bool require_targets) {
  require_config(count >= 1, "gen-data: count must be >= 1");
  auto problem = build_problem<S>(cfg.root.at("problem"));
  const json& jt = cfg.root.at("train");
  const SamplingScheme scheme = jt.contains("scheme") ? parse_scheme(jt.at("scheme")) : SamplingScheme{};
  const std::uint64_t seed = jt.value("seed", std::uint64_t(0));

  if (require_targets && cfg.problem_type() == "bvp1d" && scheme.kind == SchemeKind::rhs)
    throw unsupported_error("the nonlinear BVP has no classical solver: RHS-sampled targets are unavailable");

  SeededRng rng(seed);
  const Batch<S> batch = make_batch(problem, scheme, count, rng);
  if (require_targets)
    for (const auto& s : batch)
      if (!s.target) throw unsupported_error("dataset contains samples without targets");

  json header;
  header["problem"] = cfg.root.at("problem");
  header["grid"] = cfg.grid();
  header["scheme"] = jt.contains("scheme") ? jt.at("scheme") : json::object();
  header["seed"] = seed;
  write_dataset(out_file, header, batch);

  // Field summary statistics.
  std::cout << "wrote " << batch.size() << " samples to " << out_file << "\n";
  for (const auto& [name, first] : batch.front().fields) {
    double mn = 1e300, mx = -1e300, mean = 0.0;
    std::int64_t n = 0;
    for (const auto& s : batch) {
      const auto& v = s.fields.at(name);
      mn = std::min(mn, static_cast<double>(v.minCoeff()));
      mx = std::max(mx, static_cast<double>(v.maxCoeff()));
      mean += static_cast<double>(v.sum());
      n += v.size();
    }
    (void)first;
    std::cout << "field " << name << ": mean=" << format_metric(mean / static_cast<double>(n))
              << " min=" << format_metric(mn) << " max=" << format_metric(mx) << "\n";
  }
  return kExitOk;
}

// ============================================================================
// export-dense
// ============================================================================

template <typename S>
int run_export_dense(const std::string& checkpoint_path, const std::string& out_file, const std::string& format) {
  auto loaded = load_checkpoint<S>(checkpoint_path);
  if (!loaded.model->linear())
    throw unsupported_error("export-dense requires a linear model (identity activations)");
  const Mat<S> g = loaded.model->assemble_dense_operator();

  if (format == "csv") {
    std::string text;
    for (Index i = 0; i < g.rows(); ++i) {
      for (Index j = 0; j < g.cols(); ++j) {
        if (j) text += ',';
        text += format_metric(static_cast<double>(g(i, j)));
      }
      text += '\n';
    }
    write_text(out_file, text);
  } else if (format == "bin") {
    std::ofstream out(out_file, std::ios::binary | std::ios::trunc);
    const std::uint64_t rows = static_cast<std::uint64_t>(g.rows()), cols = static_cast<std::uint64_t>(g.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    Mat<double> gd = g.template cast<double>();
    out.write(reinterpret_cast<const char*>(gd.data()), static_cast<std::streamsize>(sizeof(double) * gd.size()));
    if (!out) throw integrity_error("failed writing matrix: " + out_file);
  } else {
    throw config_error("export-dense: format must be 'csv' or 'bin'");
  }
  std::cout << "wrote " << g.rows() << "x" << g.cols() << " operator to " << out_file << "\n";
  return kExitOk;
}

}  // namespace

// ============================================================================
// Entry points
// ============================================================================

int cmd_train(const CommonOpts& opts) {
  return guarded([&] {
    const RunConfig cfg = resolve_config(opts);
    return cfg.precision() == "f64" ? run_train<double>(cfg) : run_train<float>(cfg);
  });
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint_path, bool oracle, bool fusion_off) {
  return guarded([&] {
    const RunConfig cfg = resolve_config(opts);
    const std::string dtype = peek_checkpoint_dtype(checkpoint_path);
    return dtype == "f64" ? run_eval<double>(cfg, checkpoint_path, oracle, fusion_off)
                          : run_eval<float>(cfg, checkpoint_path, oracle, fusion_off);
  });
}

int cmd_gradcheck(const CommonOpts& opts, int probes) {
  return guarded([&] {
    const RunConfig cfg = resolve_config(opts);
    return run_gradcheck(cfg, probes);
  });
}

int cmd_gen_data(const CommonOpts& opts, std::int64_t count, const std::string& out_file, bool require_targets) {
  return guarded([&] {
    const RunConfig cfg = resolve_config(opts);
    return cfg.precision() == "f64" ? run_gen_data<double>(cfg, count, out_file, require_targets)
                                    : run_gen_data<float>(cfg, count, out_file, require_targets);
  });
}

int cmd_export_dense(const CommonOpts& opts, const std::string& checkpoint_path, const std::string& out_file,
                     const std::string& format) {
  return guarded([&] {
    if (!opts.config_path.empty()) resolve_config(opts);  // checkpoints are self-contained
    const std::string dtype = peek_checkpoint_dtype(checkpoint_path);
    return dtype == "f64" ? run_export_dense<double>(checkpoint_path, out_file, format)
                          : run_export_dense<float>(checkpoint_path, out_file, format);
  });
}

}  // namespace gfmm
