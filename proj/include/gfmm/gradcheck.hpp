#pragma once

#include "gfmm/adam.hpp"
#include "gfmm/rng.hpp"
#include "gfmm/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace gfmm {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double worst_tape = 0.0;
  double worst_fd = 0.0;
  int probes = 0;
};

// Compares tape gradients against central finite differences on randomly
// probed scalar parameters. The loss closure must be deterministic; run it
// with S = double. Relative error uses max(1, |g|) in the denominator so
// near-zero gradients are compared absolutely.
template <typename S>
GradCheckReport grad_check(const std::function<TensorPtr<S>(GradTape<S>*)>& loss_fn,
                           const std::vector<Param<S>>& params, int probe_count, S h, SeededRng& rng) {
  zero_grads(params);
  GradTape<S> tape;
  auto loss = loss_fn(&tape);
  tape.backward(loss);

  GradCheckReport rep;
  rep.probes = probe_count;
  for (int probe = 0; probe < probe_count; ++probe) {
    const auto& p = params[rng.below(params.size())];
    const Index q = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p.tensor->numel())));
    const double g_tape = static_cast<double>(p.tensor->grad()[q]);

    S& w = p.tensor->values()[q];
    const S w0 = w;
    w = w0 + h;
    const double f_plus = static_cast<double>(loss_fn(nullptr)->values()[0]);
    w = w0 - h;
    const double f_minus = static_cast<double>(loss_fn(nullptr)->values()[0]);
    w = w0;
    const double g_fd = (f_plus - f_minus) / (2.0 * static_cast<double>(h));

    const double denom = std::max({1.0, std::abs(g_tape), std::abs(g_fd)});
    const double rel = std::abs(g_tape - g_fd) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_param = p.name;
      rep.worst_index = q;
      rep.worst_tape = g_tape;
      rep.worst_fd = g_fd;
    }
  }
  return rep;
}

}  // namespace gfmm
