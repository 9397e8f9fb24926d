#include <doctest.h>

#include "gfmm/checkpoint.hpp"
#include "gfmm/config.hpp"
#include "gfmm/train.hpp"

#include <cstdio>
#include <fstream>

using namespace gfmm;

namespace {

json small_uno_spec() {
  return {{"kind", "uno"},
          {"inputs", {"c"}},
          {"blocks", {{{"levels", 2}, {"activation", "identity"}}, {{"levels", 2}, {"activation", "identity"}}}}};
}

TrainSettings small_settings(std::int64_t iters, int workers = 1) {
  TrainSettings t;
  t.iterations = iters;
  t.batch = 8;
  t.lr.initial = 1e-3;
  t.seed = 5;
  t.eval_cadence = 50;
  t.val_samples = 32;
  t.workers = workers;
  return t;
}

}  // namespace

TEST_CASE("train_loop: zero iterations is a no-op") {
  SeededRng rng(7);
  auto model = build_model<float>(small_uno_spec(), 64, rng);
  const Vec<float> before = model->parameters()[0].tensor->values();
  AdamState<float> adam;
  Problem<float> prob = PoissonProblem<float>{Grid1D<float>{64}};
  SeededRng train_rng(5);
  auto log = train_loop(*model, adam, prob, SamplingScheme{}, small_settings(0), train_rng);
  CHECK(log.empty());
  CHECK((model->parameters()[0].tensor->values() - before).norm() == 0);
}

TEST_CASE("train_loop: smoke run reduces the training loss") {
  SeededRng rng(7);
  auto model = build_model<float>(small_uno_spec(), 64, rng);
  AdamState<float> adam;
  Problem<float> prob = PoissonProblem<float>{Grid1D<float>{64}};
  SeededRng train_rng(5);
  auto settings = small_settings(200);
  settings.eval_cadence = 10;
  auto log = train_loop(*model, adam, prob, SamplingScheme{}, settings, train_rng);
  REQUIRE(log.size() >= 2);
  CHECK(log.back().loss < log.front().loss);
  CHECK(log.back().rel.has_value());
  CHECK(log.back().be.has_value());
}

TEST_CASE("train_loop: lr == 0 leaves parameters bit-identical") {
  SeededRng rng(8);
  auto model = build_model<float>(small_uno_spec(), 64, rng);
  const Vec<float> before = model->parameters()[3].tensor->values();
  AdamState<float> adam;
  Problem<float> prob = PoissonProblem<float>{Grid1D<float>{64}};
  SeededRng train_rng(5);
  auto settings = small_settings(20);
  settings.lr.initial = 0.0;
  train_loop(*model, adam, prob, SamplingScheme{}, settings, train_rng);
  const Vec<float> after = model->parameters()[3].tensor->values();
  for (Index i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("train_loop: identical seeds give identical logs and weights") {
  auto run = [] {
    SeededRng rng(9);
    auto model = build_model<float>(small_uno_spec(), 64, rng);
    AdamState<float> adam;
    Problem<float> prob = PoissonProblem<float>{Grid1D<float>{64}};
    SeededRng train_rng(11);
    auto log = train_loop(*model, adam, prob, SamplingScheme{}, small_settings(60), train_rng);
    return std::make_pair(metrics_csv(log), Vec<float>(model->parameters()[0].tensor->values()));
  };
  auto [csv1, w1] = run();
  auto [csv2, w2] = run();
  CHECK(csv1 == csv2);
  for (Index i = 0; i < w1.size(); ++i) CHECK(w1[i] == w2[i]);
}

TEST_CASE("lr schedule: drops apply from their iteration") {
  LrSchedule s;
  s.initial = 1e-3;
  s.drops = {{100, 1e-4}, {200, 1e-5}};
  CHECK(s.at(0) == 1e-3);
  CHECK(s.at(99) == 1e-3);
  CHECK(s.at(100) == 1e-4);
  CHECK(s.at(250) == 1e-5);
}

TEST_CASE("metrics csv: layout and empty cells") {
  MetricsRecord r;
  r.iteration = 10;
  r.loss = 0.5;
  r.rel = 0.25;
  const std::string csv = metrics_csv({r});
  CHECK(csv == "iteration,loss,eps_rel,eps_be,eps_res_int,eps_res_bnd\n10,0.5,0.25,,,\n");
}

TEST_CASE("checkpoint: round trip is bit-identical, corruption and version are rejected") {
  SeededRng rng(10);
  json spec = {{"kind", "uno"}, {"inputs", {"c"}}, {"blocks", {{{"levels", 2}, {"activation", "rational"}}}}};
  auto model = build_model<float>(spec, 32, rng);
  AdamState<float> adam;

  // Give adam some state.
  auto params = model->parameters();
  zero_grads(params);
  for (auto& p : params) p.tensor->grad().setConstant(0.01f);
  adam.step(params, 1e-3f);

  Sample<float> s;
  SeededRng drng(2);
  Vec<float> c(32);
  for (Index i = 0; i < 32; ++i) c[i] = float(drng.uniform(-1, 1));
  s.fields["c"] = c;
  const Vec<float> before = model->predict(nullptr, s)->values();

  const std::string path = "test_checkpoint.gfmm";
  save_checkpoint(path, *model, &adam, 123, 32, SeededRng(4));

  auto loaded = load_checkpoint<float>(path);
  CHECK(loaded.iteration == 123);
  REQUIRE(loaded.adam != nullptr);
  CHECK(loaded.adam->step_count() == 1);
  const Vec<float> after = loaded.model->predict(nullptr, s)->values();
  REQUIRE(after.size() == before.size());
  for (Index i = 0; i < after.size(); ++i) CHECK(after[i] == before[i]);

  CHECK_THROWS_AS(load_checkpoint<double>(path), config_error);  // dtype mismatch

  // Truncation -> integrity error, no partial model.
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path + ".trunc", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 64));
  }
  CHECK_THROWS_AS(load_checkpoint<float>(path + ".trunc"), integrity_error);

  // Flipped payload byte -> checksum failure.
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[bytes.size() - 5] ^= 0x40;
    std::ofstream out(path + ".bad", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint<float>(path + ".bad"), integrity_error);

  // Version bump -> explicit incompatibility.
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[8] = 99;
    std::ofstream out(path + ".ver", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint<float>(path + ".ver"), integrity_error);

  std::remove(path.c_str());
  std::remove((path + ".trunc").c_str());
  std::remove((path + ".bad").c_str());
  std::remove((path + ".ver").c_str());
}

TEST_CASE("worker-parallel training is deterministic for a fixed worker count") {
  auto run = [](int workers) {
    SeededRng rng(12);
    auto model = build_model<float>(small_uno_spec(), 64, rng);
    AdamState<float> adam;
    Problem<float> prob = PoissonProblem<float>{Grid1D<float>{64}};
    SeededRng train_rng(13);
    train_loop(*model, adam, prob, SamplingScheme{}, small_settings(30, workers), train_rng);
    return Vec<float>(model->parameters()[0].tensor->values());
  };
  const Vec<float> a = run(2), b = run(2), c = run(1);
  for (Index i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  // Two workers reduce in chunk order; the result matches single-threaded
  // execution up to floating-point regrouping.
  CHECK((a.cast<double>() - c.cast<double>()).norm() / c.cast<double>().norm() <= 1e-4);
}

TEST_CASE("non-finite loss aborts with a numerical error") {
  SeededRng rng(14);
  auto model = build_model<float>(small_uno_spec(), 64, rng);
  // Poison a weight so the forward pass produces inf.
  model->parameters()[0].tensor->values()[0] = std::numeric_limits<float>::infinity();
  AdamState<float> adam;
  Problem<float> prob = PoissonProblem<float>{Grid1D<float>{64}};
  SeededRng train_rng(5);
  CHECK_THROWS_AS(train_loop(*model, adam, prob, SamplingScheme{}, small_settings(5), train_rng),
                  numerical_error);
}
