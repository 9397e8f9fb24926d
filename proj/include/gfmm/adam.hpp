#pragma once

#include "gfmm/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace gfmm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment tensors are created to match the
// parameter list on first step; the list (sizes and order) must not change
// afterwards.
template <typename S>
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return step_; }

  void step(const std::vector<Param<S>>& params) { step(params, S(cfg_.lr)); }

  void step(const std::vector<Param<S>>& params, S lr) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Vec<S>::Zero(p.tensor->numel()));
        v_.push_back(Vec<S>::Zero(p.tensor->numel()));
      }
    }
    require(m_.size() == params.size(), "adam: parameter list changed size");
    ++step_;
    const S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2);
    const S c1 = S(1) - S(std::pow(cfg_.beta1, static_cast<double>(step_)));
    const S c2 = S(1) - S(std::pow(cfg_.beta2, static_cast<double>(step_)));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& w = params[k].tensor->values();
      const auto& g = params[k].tensor->grad();
      require(g.size() == m_[k].size(), "adam: gradient/moment shape mismatch");
      m_[k] = b1 * m_[k] + (S(1) - b1) * g;
      v_[k] = b2 * v_[k] + (S(1) - b2) * g.cwiseProduct(g);
      w.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + S(cfg_.eps));
    }
  }

  std::vector<Vec<S>>& first_moments() { return m_; }
  std::vector<Vec<S>>& second_moments() { return v_; }
  void restore(std::int64_t step, std::vector<Vec<S>> m, std::vector<Vec<S>> v) {
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<Vec<S>> m_, v_;
};

template <typename S>
void zero_grads(const std::vector<Param<S>>& params) {
  for (const auto& p : params) p.tensor->zero_grad();
}

}  // namespace gfmm
