#pragma once

#include "gfmm/core.hpp"

#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace gfmm {

// Dense tensor of rank 1, 2 or 4 with an optional gradient slot of the same
// shape. Storage is a flat array; rank-2 tensors are column-major so they map
// directly onto Eigen matrices. A rank-4 weight [Cout, Cin, P, P] is laid out
// as the column-major (Cout P) x (Cin P) channel-interleaved block matrix
//   W(i + po Cout, j + pi Cin) = F(i, j, po, pi),
// so that the channel-summed transform z(i) = sum_j F(i,j,:,:) y(j) is one
// matrix-vector product of W with the flat [Cin, P] state.
template <typename S>
class Tensor {
 public:
  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    Index n = 1;
    for (Index d : shape_) {
      require(d > 0, "tensor dimensions must be positive");
      n *= d;
    }
    data_ = Vec<S>::Zero(n);
  }

  Tensor(std::vector<Index> shape, Vec<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
    Index n = 1;
    for (Index d : shape_) n *= d;
    require(n == data_.size(), "tensor data does not match shape");
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_[static_cast<size_t>(i)]; }
  Index numel() const { return data_.size(); }

  Vec<S>& values() { return data_; }
  const Vec<S>& values() const { return data_; }

  bool has_grad() const { return grad_.size() == data_.size(); }

  // Lazily allocated, zero-initialized on first touch.
  Vec<S>& grad() {
    if (!has_grad()) grad_ = Vec<S>::Zero(data_.size());
    return grad_;
  }

  void zero_grad() {
    if (has_grad())
      grad_.setZero();
    else
      grad_ = Vec<S>::Zero(data_.size());
  }

  void drop_grad() { grad_.resize(0); }

  // --- shaped views -----------------------------------------------------

  VecMap<S> vec() {
    require(rank() == 1, "vec() needs a rank-1 tensor");
    return VecMap<S>(data_.data(), data_.size());
  }
  ConstVecMap<S> vec() const {
    require(rank() == 1, "vec() needs a rank-1 tensor");
    return ConstVecMap<S>(data_.data(), data_.size());
  }

  MatMap<S> mat() {
    require(rank() == 2, "mat() needs a rank-2 tensor");
    return MatMap<S>(data_.data(), shape_[0], shape_[1]);
  }
  ConstMatMap<S> mat() const {
    require(rank() == 2, "mat() needs a rank-2 tensor");
    return ConstMatMap<S>(data_.data(), shape_[0], shape_[1]);
  }

  MatMap<S> grad_mat() {
    require(rank() == 2, "grad_mat() needs a rank-2 tensor");
    return MatMap<S>(grad().data(), shape_[0], shape_[1]);
  }
  VecMap<S> grad_vec() {
    require(rank() == 1, "grad_vec() needs a rank-1 tensor");
    return VecMap<S>(grad().data(), data_.size());
  }

  using StridedConst = Eigen::Map<const Mat<S>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
  using Strided = Eigen::Map<Mat<S>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

  // The whole weight as a (Cout P) x (Cin P) block matrix (rank-2 tensors
  // are their own block matrix).
  ConstMatMap<S> block_matrix() const {
    if (rank() == 2) return ConstMatMap<S>(data_.data(), shape_[0], shape_[1]);
    require(rank() == 4, "block_matrix() needs a rank-2 or rank-4 tensor");
    return ConstMatMap<S>(data_.data(), shape_[0] * shape_[2], shape_[1] * shape_[3]);
  }

  MatMap<S> grad_block_matrix() {
    grad();
    if (rank() == 2) return MatMap<S>(grad_.data(), shape_[0], shape_[1]);
    require(rank() == 4, "block_matrix() needs a rank-2 or rank-4 tensor");
    return MatMap<S>(grad_.data(), shape_[0] * shape_[2], shape_[1] * shape_[3]);
  }

  // Slice (i, j) of a [Cout, Cin, P, P] weight (a strided view into the
  // block matrix), or the whole matrix of a rank-2 tensor when i == j == 0.
  StridedConst slice(Index i, Index j) const {
    const auto [ptr, rows, cols, inner, outer] = slice_geometry(data_.data(), i, j);
    return StridedConst(ptr, rows, cols, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(outer, inner));
  }

  Strided slice_mut(Index i, Index j) {
    const auto [ptr, rows, cols, inner, outer] = slice_geometry(data_.data(), i, j);
    return Strided(const_cast<S*>(ptr), rows, cols, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(outer, inner));
  }

  Strided grad_slice(Index i, Index j) {
    grad();
    const auto [ptr, rows, cols, inner, outer] = slice_geometry(grad_.data(), i, j);
    return Strided(const_cast<S*>(ptr), rows, cols, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(outer, inner));
  }

  Index out_channels() const { return rank() == 4 ? shape_[0] : Index(1); }
  Index in_channels() const { return rank() == 4 ? shape_[1] : Index(1); }

  std::string name;  // parameter path, empty for intermediates

 private:
  std::tuple<const S*, Index, Index, Index, Index> slice_geometry(const S* base, Index i, Index j) const {
    if (rank() == 2) {
      require(i == 0 && j == 0, "rank-2 tensor has a single slice");
      return {base, shape_[0], shape_[1], 1, shape_[0]};
    }
    require(rank() == 4, "slice() needs a rank-2 or rank-4 tensor");
    require(i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1], "weight slice out of range");
    const Index c_out = shape_[0], c_in = shape_[1], p = shape_[2];
    return {base + i + j * c_out * p, p, shape_[3], c_out, c_in * c_out * p};
  }

  std::vector<Index> shape_;
  Vec<S> data_;
  Vec<S> grad_;
};

template <typename S> using TensorPtr = std::shared_ptr<Tensor<S>>;

template <typename S>
TensorPtr<S> make_tensor(std::vector<Index> shape) {
  return std::make_shared<Tensor<S>>(std::move(shape));
}

template <typename S>
TensorPtr<S> make_tensor(std::vector<Index> shape, Vec<S> data) {
  return std::make_shared<Tensor<S>>(std::move(shape), std::move(data));
}

template <typename S>
TensorPtr<S> make_vector(const Vec<S>& v) {
  return make_tensor<S>({v.size()}, v);
}

template <typename S>
TensorPtr<S> make_matrix(const Mat<S>& m) {
  Vec<S> flat = ConstVecMap<S>(m.data(), m.size());
  return make_tensor<S>({m.rows(), m.cols()}, std::move(flat));
}

template <typename S>
TensorPtr<S> make_scalar(S v) {
  Vec<S> d(1);
  d[0] = v;
  return make_tensor<S>({1}, std::move(d));
}

// Named parameter handle; the enumeration order defines the serialization
// and optimizer-slot order.
template <typename S>
struct Param {
  std::string name;
  TensorPtr<S> tensor;
};

}  // namespace gfmm
