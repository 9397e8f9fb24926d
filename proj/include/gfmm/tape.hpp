#pragma once

#include "gfmm/tensor.hpp"

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace gfmm {

// Reverse-mode tape. Every traced primitive appends one pull-back closure;
// backward() replays them in exact reverse execution order, accumulating
// into the operands' gradient slots. Operations called with a null tape
// compute values only.
template <typename S>
class GradTape {
 public:
  void record(std::function<void()> pull) { nodes_.push_back(std::move(pull)); }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = seed and pulls gradients back through the tape.
  // Callers are responsible for zeroing parameter gradients beforehand;
  // parameters that never reached the loss then read as zero-gradient.
  void backward(const TensorPtr<S>& loss, S seed = S(1)) {
    if (loss->numel() != 1) throw contract_error("backward() needs a scalar loss");
    if (consumed_) throw state_error("tape already consumed by backward()");
    consumed_ = true;
    loss->grad()[0] += seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  bool consumed() const { return consumed_; }

  void clear() {
    nodes_.clear();
    consumed_ = false;
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

// ============================================================================
// Traced primitives
// ============================================================================

namespace ops {

template <typename S>
TensorPtr<S> add(GradTape<S>* t, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  require(a->shape() == b->shape(), "add: shape mismatch");
  auto out = make_tensor<S>(a->shape(), Vec<S>(a->values() + b->values()));
  if (t)
    t->record([a, b, out] {
      a->grad() += out->grad();
      b->grad() += out->grad();
    });
  return out;
}

template <typename S>
TensorPtr<S> sub(GradTape<S>* t, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  require(a->shape() == b->shape(), "sub: shape mismatch");
  auto out = make_tensor<S>(a->shape(), Vec<S>(a->values() - b->values()));
  if (t)
    t->record([a, b, out] {
      a->grad() += out->grad();
      b->grad() -= out->grad();
    });
  return out;
}

// n-ary accumulation; summation order is the argument order.
template <typename S>
TensorPtr<S> sum_list(GradTape<S>* t, const std::vector<TensorPtr<S>>& xs) {
  require(!xs.empty(), "sum_list: empty operand list");
  if (xs.size() == 1) return xs[0];
  Vec<S> acc = xs[0]->values();
  for (std::size_t k = 1; k < xs.size(); ++k) {
    require(xs[k]->shape() == xs[0]->shape(), "sum_list: shape mismatch");
    acc += xs[k]->values();
  }
  auto out = make_tensor<S>(xs[0]->shape(), std::move(acc));
  if (t)
    t->record([xs, out] {
      for (const auto& x : xs) x->grad() += out->grad();
    });
  return out;
}

template <typename S>
TensorPtr<S> cmul(GradTape<S>* t, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  require(a->shape() == b->shape(), "cmul: shape mismatch");
  auto out = make_tensor<S>(a->shape(), Vec<S>(a->values().cwiseProduct(b->values())));
  if (t)
    t->record([a, b, out] {
      a->grad() += out->grad().cwiseProduct(b->values());
      b->grad() += out->grad().cwiseProduct(a->values());
    });
  return out;
}

template <typename S>
TensorPtr<S> scale(GradTape<S>* t, const TensorPtr<S>& a, S s) {
  auto out = make_tensor<S>(a->shape(), Vec<S>(a->values() * s));
  if (t)
    t->record([a, out, s] { a->grad() += out->grad() * s; });
  return out;
}

// z = W y for a rank-2 weight.
template <typename S>
TensorPtr<S> matvec(GradTape<S>* t, const TensorPtr<S>& w, const TensorPtr<S>& y) {
  require(w->rank() == 2 && y->rank() == 1, "matvec: expected matrix and vector");
  require(w->dim(1) == y->dim(0), "matvec: inner dimension mismatch");
  auto out = make_tensor<S>({w->dim(0)});
  out->values() = w->mat() * y->vec();
  if (t)
    t->record([w, y, out] {
      w->grad_mat().noalias() += out->grad_vec() * y->vec().transpose();
      y->grad_vec().noalias() += w->mat().transpose() * out->grad_vec();
    });
  return out;
}

// Multi-channel weight application with an optional additive correction:
//   z(i) = sum_j (F(i,j,:,:) + eps) y(j),
// computed as one block-matrix product W y_flat plus eps (sum_j y(j)). F is
// [Cout, Cin, P, P] (or plain P x P), y is [Cin, P], eps is P x P or null;
// the result is [Cout, P].
template <typename S>
TensorPtr<S> channel_matvec(GradTape<S>* t, const TensorPtr<S>& f, const TensorPtr<S>& y,
                            const TensorPtr<S>& eps) {
  const Index c_out = f->out_channels();
  const Index c_in = f->in_channels();
  const Index p = (f->rank() == 4) ? f->dim(2) : f->dim(0);
  require(y->rank() == 2 && y->dim(0) == c_in, "channel_matvec: input channel mismatch");
  require(y->dim(1) == ((f->rank() == 4) ? f->dim(3) : f->dim(1)),
          "channel_matvec: block size mismatch");
  if (eps)
    require(eps->rank() == 2 && eps->dim(0) == p && eps->dim(1) == y->dim(1),
            "weight correction must match the weight slice shape");

  auto out = make_tensor<S>({c_out, p});
  auto w = f->block_matrix();
  out->values().noalias() = w * y->values();
  if (eps) {
    // Channel sums of y, per position.
    Vec<S> ys = y->mat().colwise().sum().transpose();
    Vec<S> corr = eps->mat() * ys;
    // Broadcast the correction to every output channel.
    out->mat().rowwise() += corr.transpose();
  }
  if (t)
    t->record([f, y, eps, out] {
      const auto& g = out->grad();
      f->grad_block_matrix().noalias() += g * y->values().transpose();
      y->grad().noalias() += f->block_matrix().transpose() * g;
      if (eps) {
        auto gm = Eigen::Map<const Mat<S>>(g.data(), out->dim(0), out->dim(1));
        Vec<S> gs = gm.colwise().sum().transpose();
        Vec<S> ys = y->mat().colwise().sum().transpose();
        eps->grad_mat().noalias() += gs * ys.transpose();
        Vec<S> back = eps->mat().transpose() * gs;
        y->grad_mat().rowwise() += back.transpose();
      }
    });
  return out;
}

// Bilinear block transform A X B^T on square blocks.
template <typename S>
TensorPtr<S> contract2d(GradTape<S>* t, const TensorPtr<S>& a, const TensorPtr<S>& x, const TensorPtr<S>& b) {
  require(a->rank() == 2 && x->rank() == 2 && b->rank() == 2, "contract2d: rank-2 operands required");
  const Index p = x->dim(0);
  require(x->dim(1) == p && a->dim(0) == p && a->dim(1) == p && b->dim(0) == p && b->dim(1) == p,
          "contract2d: operands must be square and equally sized");
  auto out = make_tensor<S>({p, p});
  out->mat().noalias() = a->mat() * x->mat() * b->mat().transpose();
  if (t)
    t->record([a, x, b, out] {
      const auto g = out->grad_mat();
      a->grad_mat().noalias() += g * b->mat() * x->mat().transpose();
      x->grad_mat().noalias() += a->mat().transpose() * g * b->mat();
      b->grad_mat().noalias() += g.transpose() * a->mat() * x->mat();
    });
  return out;
}

// phi(x) = x / (1 + |x|), elementwise; d(phi) = 1 / (1 + |x|)^2.
template <typename S>
TensorPtr<S> rational_activation(GradTape<S>* t, const TensorPtr<S>& x) {
  auto out = make_tensor<S>(x->shape());
  out->values() = x->values().array() / (S(1) + x->values().array().abs());
  if (t)
    t->record([x, out] {
      auto d = (S(1) + x->values().array().abs()).square();
      x->grad().array() += out->grad().array() / d;
    });
  return out;
}

// max(x, 0) with subgradient 0 at x == 0.
template <typename S>
TensorPtr<S> relu_activation(GradTape<S>* t, const TensorPtr<S>& x) {
  auto out = make_tensor<S>(x->shape());
  out->values() = x->values().cwiseMax(S(0));
  if (t)
    t->record([x, out] {
      x->grad().array() += out->grad().array() * (x->values().array() > S(0)).template cast<S>();
    });
  return out;
}

template <typename S>
TensorPtr<S> apply_activation(GradTape<S>* t, const TensorPtr<S>& x, Activation act) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::rational: return rational_activation(t, x);
    case Activation::relu: return relu_activation(t, x);
  }
  return x;
}

template <typename S>
TensorPtr<S> mean(GradTape<S>* t, const TensorPtr<S>& x) {
  auto out = make_scalar<S>(x->values().mean());
  if (t)
    t->record([x, out] { x->grad().array() += out->grad()[0] / S(x->numel()); });
  return out;
}

template <typename S>
TensorPtr<S> sum(GradTape<S>* t, const TensorPtr<S>& x) {
  auto out = make_scalar<S>(x->values().sum());
  if (t)
    t->record([x, out] { x->grad().array() += out->grad()[0]; });
  return out;
}

template <typename S>
TensorPtr<S> row(GradTape<S>* t, const TensorPtr<S>& x, Index i) {
  require(x->rank() == 2 && i >= 0 && i < x->dim(0), "row: index out of range");
  auto out = make_tensor<S>({x->dim(1)});
  out->vec() = x->mat().row(i).transpose();
  if (t)
    t->record([x, i, out] { x->grad_mat().row(i) += out->grad_vec().transpose(); });
  return out;
}

template <typename S>
TensorPtr<S> stack_rows(GradTape<S>* t, const std::vector<TensorPtr<S>>& rows) {
  require(!rows.empty(), "stack_rows: empty list");
  const Index n = rows[0]->numel();
  auto out = make_tensor<S>({static_cast<Index>(rows.size()), n});
  auto m = out->mat();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require(rows[k]->rank() == 1 && rows[k]->numel() == n, "stack_rows: row length mismatch");
    m.row(static_cast<Index>(k)) = rows[k]->vec().transpose();
  }
  if (t)
    t->record([rows, out] {
      auto g = out->grad_mat();
      for (std::size_t k = 0; k < rows.size(); ++k)
        rows[k]->grad_vec() += g.row(static_cast<Index>(k)).transpose();
    });
  return out;
}

template <typename S>
TensorPtr<S> slice_cols(GradTape<S>* t, const TensorPtr<S>& x, Index c0, Index w) {
  require(x->rank() == 2 && c0 >= 0 && w > 0 && c0 + w <= x->dim(1), "slice_cols: range out of bounds");
  auto out = make_tensor<S>({x->dim(0), w});
  out->mat() = x->mat().middleCols(c0, w);
  if (t)
    t->record([x, c0, w, out] { x->grad_mat().middleCols(c0, w) += out->grad_mat(); });
  return out;
}

template <typename S>
TensorPtr<S> concat_cols(GradTape<S>* t, const std::vector<TensorPtr<S>>& parts) {
  require(!parts.empty(), "concat_cols: empty list");
  const Index r = parts[0]->dim(0);
  Index total = 0;
  for (const auto& p : parts) {
    require(p->rank() == 2 && p->dim(0) == r, "concat_cols: row count mismatch");
    total += p->dim(1);
  }
  auto out = make_tensor<S>({r, total});
  Index c = 0;
  for (const auto& p : parts) {
    out->mat().middleCols(c, p->dim(1)) = p->mat();
    c += p->dim(1);
  }
  if (t)
    t->record([parts, out] {
      Index c = 0;
      for (const auto& p : parts) {
        p->grad_mat() += out->grad_mat().middleCols(c, p->dim(1));
        c += p->dim(1);
      }
    });
  return out;
}

// Same flat data under a new shape (copying; gradient passes through).
template <typename S>
TensorPtr<S> reshape(GradTape<S>* t, const TensorPtr<S>& x, std::vector<Index> shape) {
  auto out = make_tensor<S>(std::move(shape), Vec<S>(x->values()));
  require(out->numel() == x->numel(), "reshape: element count mismatch");
  if (t)
    t->record([x, out] { x->grad() += out->grad(); });
  return out;
}

// Rank-2 submatrix.
template <typename S>
TensorPtr<S> block2d(GradTape<S>* t, const TensorPtr<S>& x, Index r0, Index c0, Index h, Index w) {
  require(x->rank() == 2 && r0 >= 0 && c0 >= 0 && h > 0 && w > 0 && r0 + h <= x->dim(0) && c0 + w <= x->dim(1),
          "block2d: range out of bounds");
  auto out = make_tensor<S>({h, w});
  out->mat() = x->mat().block(r0, c0, h, w);
  if (t)
    t->record([x, r0, c0, h, w, out] { x->grad_mat().block(r0, c0, h, w) += out->grad_mat(); });
  return out;
}

// Scatter equally sized blocks into an [rows, cols] matrix at given offsets.
template <typename S>
TensorPtr<S> assemble_blocks(GradTape<S>* t, Index rows, Index cols, const std::vector<TensorPtr<S>>& blocks,
                             const std::vector<std::pair<Index, Index>>& offsets) {
  require(blocks.size() == offsets.size(), "assemble_blocks: block/offset count mismatch");
  auto out = make_tensor<S>({rows, cols});
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    out->mat().block(offsets[k].first, offsets[k].second, b->dim(0), b->dim(1)) = b->mat();
  }
  if (t)
    t->record([blocks, offsets, out] {
      for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& b = blocks[k];
        b->grad_mat() += out->grad_mat().block(offsets[k].first, offsets[k].second, b->dim(0), b->dim(1));
      }
    });
  return out;
}

}  // namespace ops

// Mean squared error between a prediction and a fixed target.
template <typename S>
TensorPtr<S> mse_loss(GradTape<S>* t, const TensorPtr<S>& pred, const TensorPtr<S>& target) {
  require(pred->shape() == target->shape(), "mse_loss: shape mismatch");
  auto d = ops::sub(t, pred, target);
  return ops::mean(t, ops::cmul(t, d, d));
}

}  // namespace gfmm
