#include "gfmm/commands.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"GFMM neural operators: training, evaluation and data tooling"};
  app.require_subcommand(1);

  auto add_common = [](CLI::App* cmd, gfmm::CommonOpts& opts, bool config_required = true) {
    auto* c = cmd->add_option("--config", opts.config_path, "run configuration file (JSON)");
    if (config_required) c->required();
    cmd->add_option("--set", opts.overrides, "override a config value, e.g. --set train.lr=0.001")
        ->take_all();
    cmd->add_option("--seed", opts.seed, "override train.seed");
    cmd->add_option("--out", opts.out, "override io.out_dir");
  };

  gfmm::CommonOpts train_opts;
  auto* train = app.add_subcommand("train", "train a model and write metrics/checkpoint artifacts");
  add_common(train, train_opts);

  gfmm::CommonOpts eval_opts;
  std::string eval_ckpt;
  bool eval_oracle = false, eval_fusion_off = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over fixed validation sets");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_flag("--oracle", eval_oracle, "substitute the true solution for the prediction");
  eval->add_flag("--fusion-off", eval_fusion_off, "zero the multi-modal fusion path (MNO only)");

  gfmm::CommonOpts gc_opts;
  int gc_probes = 200;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare tape gradients against finite differences");
  add_common(gradcheck, gc_opts);
  gradcheck->add_option("--probes", gc_probes, "number of random parameter probes");

  gfmm::CommonOpts gen_opts;
  std::int64_t gen_n = 10;
  std::string gen_out = "dataset.gfmm";
  bool gen_require_targets = false;
  auto* gen = app.add_subcommand("gen-data", "generate a dataset container");
  add_common(gen, gen_opts);
  gen->add_option("--n", gen_n, "number of samples");
  gen->add_option("--out-file", gen_out, "output dataset file");
  gen->add_flag("--require-targets", gen_require_targets, "fail if any sample lacks a ground-truth target");

  gfmm::CommonOpts exp_opts;
  std::string exp_ckpt, exp_out = "operator.csv", exp_format = "csv";
  auto* exp = app.add_subcommand("export-dense", "assemble a linear model into a dense matrix");
  add_common(exp, exp_opts, /*config_required=*/false);
  exp->add_option("--checkpoint", exp_ckpt, "checkpoint file")->required();
  exp->add_option("--out-file", exp_out, "output matrix file");
  exp->add_option("--format", exp_format, "csv or bin");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return gfmm::cmd_train(train_opts);
  if (eval->parsed()) return gfmm::cmd_eval(eval_opts, eval_ckpt, eval_oracle, eval_fusion_off);
  if (gradcheck->parsed()) return gfmm::cmd_gradcheck(gc_opts, gc_probes);
  if (gen->parsed()) return gfmm::cmd_gen_data(gen_opts, gen_n, gen_out, gen_require_targets);
  if (exp->parsed()) return gfmm::cmd_export_dense(exp_opts, exp_ckpt, exp_out, exp_format);
  return 1;
}
