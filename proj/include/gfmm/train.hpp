#pragma once

#include "gfmm/checkpoint.hpp"
#include "gfmm/metrics.hpp"

#include <charconv>
#include <cmath>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

namespace gfmm {

// ============================================================================
// Learning-rate schedule: an initial value plus step drops
// ============================================================================

struct LrSchedule {
  double initial = 1e-3;
  std::vector<std::pair<std::int64_t, double>> drops;  // (iteration, lr), sorted

  double at(std::int64_t iter) const {
    double lr = initial;
    for (const auto& [when, value] : drops)
      if (iter >= when) lr = value;
    return lr;
  }
};

struct TrainSettings {
  std::int64_t iterations = 0;
  Index batch = 1;
  LrSchedule lr;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::int64_t eval_cadence = 500;
  Index val_samples = 1000;
  std::uint64_t val_seed = 0x76a1u;
  std::optional<SamplingScheme> val_scheme;  // defaults to the training scheme
  int workers = 1;

  void validate() const {
    require_config(iterations >= 0, "train.iterations must be >= 0");
    require_config(batch >= 1, "train.batch must be >= 1");
    require_config(lr.initial >= 0, "train.lr must be >= 0");
    require_config(eval_cadence >= 1, "train.eval_cadence must be >= 1");
    require_config(workers >= 1, "train.workers must be >= 1");
  }
};

struct MetricsRecord {
  std::int64_t iteration = 0;
  double loss = 0.0;
  std::optional<double> rel, be, res_int, res_bnd;
};

// ============================================================================
// Prediction helpers
// ============================================================================

template <typename S>
std::vector<Vec<S>> predict_batch(const AnyModel<S>& model, const Batch<S>& batch) {
  std::vector<Vec<S>> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = model.predict(nullptr, batch[i])->values();
  return out;
}

template <typename S>
BatchMetrics evaluate_model(const AnyModel<S>& model, const Problem<S>& problem, const Batch<S>& batch,
                            const std::optional<double>& norm_a) {
  return aggregate_metrics(problem, batch, predict_batch(model, batch), norm_a);
}

// ============================================================================
// Training loop
// ============================================================================

// One forward/backward per sample; gradients accumulate with seed 1/n so the
// step optimizes the mean batch loss. With workers > 1 the batch is split
// into contiguous chunks processed on model clones, then reduced in chunk
// order; results are deterministic for a fixed (seed, batch, workers).
template <typename S>
double train_step(AnyModel<S>& model, const std::vector<Param<S>>& params, const Batch<S>& batch,
                  std::vector<std::unique_ptr<AnyModel<S>>>& worker_models, int workers) {
  const Index n = static_cast<Index>(batch.size());
  const S seed = S(1) / S(n);
  zero_grads(params);

  if (workers <= 1 || n < 2 * workers) {
    double loss_sum = 0.0;
    GradTape<S> tape;
    for (const auto& sample : batch) {
      tape.clear();
      auto pred = model.predict(&tape, sample);
      require(sample.target.has_value(), "training requires samples with targets");
      auto target = make_vector<S>(*sample.target);
      auto loss = mse_loss(&tape, pred, target);
      loss_sum += static_cast<double>(loss->values()[0]);
      tape.backward(loss, seed);
    }
    return loss_sum / static_cast<double>(n);
  }

  // Lazily materialize one clone per worker and refresh parameter values.
  while (static_cast<int>(worker_models.size()) < workers) worker_models.push_back(model.clone());
  std::vector<std::vector<Param<S>>> wparams(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    wparams[static_cast<std::size_t>(w)] = worker_models[static_cast<std::size_t>(w)]->parameters();
    auto& wp = wparams[static_cast<std::size_t>(w)];
    for (std::size_t k = 0; k < wp.size(); ++k) wp[k].tensor->values() = params[k].tensor->values();
    zero_grads(wp);
  }

  std::vector<double> losses(static_cast<std::size_t>(workers), 0.0);
  std::vector<std::thread> threads;
  const Index chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const Index lo = w * chunk;
    const Index hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back([&, w, lo, hi] {
      GradTape<S> tape;
      double acc = 0.0;
      const auto& wm = *worker_models[static_cast<std::size_t>(w)];
      for (Index i = lo; i < hi; ++i) {
        tape.clear();
        const auto& sample = batch[static_cast<std::size_t>(i)];
        auto pred = wm.predict(&tape, sample);
        auto target = make_vector<S>(*sample.target);
        auto loss = mse_loss(&tape, pred, target);
        acc += static_cast<double>(loss->values()[0]);
        tape.backward(loss, seed);
      }
      losses[static_cast<std::size_t>(w)] = acc;
    });
  }
  for (auto& th : threads) th.join();

  double loss_sum = 0.0;
  for (int w = 0; w < workers; ++w) {
    loss_sum += losses[static_cast<std::size_t>(w)];
    const auto& wp = wparams[static_cast<std::size_t>(w)];
    for (std::size_t k = 0; k < wp.size(); ++k)
      if (wp[k].tensor->has_grad()) params[k].tensor->grad() += wp[k].tensor->grad();
  }
  return loss_sum / static_cast<double>(n);
}

template <typename S>
std::vector<MetricsRecord> train_loop(AnyModel<S>& model, AdamState<S>& adam, const Problem<S>& problem,
                                      const SamplingScheme& scheme, const TrainSettings& settings,
                                      SeededRng& rng) {
  settings.validate();
  scheme.validate();
  std::vector<MetricsRecord> log;
  if (settings.iterations == 0) return log;

  const SamplingScheme val_scheme = settings.val_scheme.value_or(scheme);
  const Batch<S> val_set = make_validation_set(problem, val_scheme, settings.val_samples, settings.val_seed);
  const std::optional<double> norm_a = problem_operator_norm(problem);

  const auto params = model.parameters();
  std::vector<std::unique_ptr<AnyModel<S>>> worker_models;

  for (std::int64_t iter = 1; iter <= settings.iterations; ++iter) {
    const Batch<S> batch = make_batch(problem, scheme, settings.batch, rng);
    const double loss = train_step(model, params, batch, worker_models, settings.workers);
    if (!std::isfinite(loss))
      throw numerical_error("non-finite training loss at iteration " + std::to_string(iter));
    adam.step(params, S(settings.lr.at(iter - 1)));

    if (iter % settings.eval_cadence == 0 || iter == settings.iterations) {
      MetricsRecord rec;
      rec.iteration = iter;
      rec.loss = loss;
      const auto m = evaluate_model(model, problem, val_set, norm_a);
      rec.rel = m.rel;
      rec.be = m.be;
      rec.res_int = m.res_int;
      rec.res_bnd = m.res_bnd;
      log.push_back(rec);
    }
  }
  return log;
}

// ============================================================================
// Metrics CSV (stable byte-for-byte given identical inputs)
// ============================================================================

inline std::string format_metric(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::string metrics_csv(const std::vector<MetricsRecord>& log) {
  std::string out = "iteration,loss,eps_rel,eps_be,eps_res_int,eps_res_bnd\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_metric(*v) : std::string(); };
  for (const auto& r : log) {
    out += std::to_string(r.iteration);
    out += ',';
    out += format_metric(r.loss);
    out += ',';
    out += cell(r.rel);
    out += ',';
    out += cell(r.be);
    out += ',';
    out += cell(r.res_int);
    out += ',';
    out += cell(r.res_bnd);
    out += '\n';
  }
  return out;
}

}  // namespace gfmm
