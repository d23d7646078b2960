// Copyright (c) 2026 The spe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPE_TENSOR_HPP_
#define SPE_TENSOR_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spe/common.hpp"

namespace spe {

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major array of doubles. Computation is done in 64-bit
// throughout; float32 appears only in the on-disk formats.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(checked_numel(shape_), 0.0);
  }

  Tensor(std::vector<int64_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    SPE_CHECK(static_cast<int64_t>(data_.size()) == checked_numel(shape_),
              "Tensor: shape " << shape_str(shape_) << " needs "
                               << checked_numel(shape_) << " values, got "
                               << data_.size());
    check_finite("Tensor constructor");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& operator()(int64_t i, int64_t j) {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }
  double operator()(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }
  double& operator()(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double operator()(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double& operator()(int64_t i, int64_t j, int64_t k, int64_t l) {
    return data_[static_cast<size_t>(
        ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  double operator()(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return data_[static_cast<size_t>(
        ((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  // Flat offset of a multi-index; the inverse of unravel below.
  int64_t flat_index(const std::vector<int64_t>& idx) const {
    SPE_CHECK(idx.size() == shape_.size(),
              "flat_index: rank mismatch " << idx.size() << " vs "
                                           << shape_.size());
    int64_t off = 0;
    for (size_t d = 0; d < shape_.size(); ++d) {
      SPE_CHECK(idx[d] >= 0 && idx[d] < shape_[d],
                "flat_index: index " << idx[d] << " out of range for dim " << d
                                     << " of " << shape_str(shape_));
      off = off * shape_[d] + idx[d];
    }
    return off;
  }

  std::vector<int64_t> unravel(int64_t flat) const {
    std::vector<int64_t> idx(shape_.size());
    for (size_t d = shape_.size(); d-- > 0;) {
      idx[d] = flat % shape_[d];
      flat /= shape_[d];
    }
    return idx;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  void scale(double v) {
    for (auto& x : data_) x *= v;
  }

  void add_scaled(const Tensor& other, double alpha) {
    SPE_CHECK(same_shape(other), "add_scaled: shape mismatch "
                                     << shape_str(shape_) << " vs "
                                     << shape_str(other.shape_));
    const double* o = other.data();
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * o[i];
  }

  double l2_norm() const {
    double s = 0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double sum() const {
    double s = 0;
    for (double v : data_) s += v;
    return s;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void check_finite(const std::string& what) const {
    for (size_t i = 0; i < data_.size(); ++i) {
      SPE_CHECK(std::isfinite(data_[i]),
                what << ": non-finite value " << data_[i] << " at flat index "
                     << i << " in tensor of shape " << shape_str(shape_));
    }
  }

  Tensor reshaped(std::vector<int64_t> new_shape) const {
    Tensor out;
    out.shape_ = std::move(new_shape);
    SPE_CHECK(checked_numel(out.shape_) == numel(),
              "reshaped: cannot view " << shape_str(shape_) << " as "
                                       << shape_str(out.shape_));
    out.data_ = data_;
    return out;
  }

 private:
  static int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      SPE_CHECK(d > 0, "Tensor: non-positive extent in shape " << shape_str(shape));
      n *= d;
    }
    return n;
  }

  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

namespace detail {
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;
}  // namespace detail

// C(m x n) = op(A) * op(B) (+= when accumulate). Plain row-major buffers;
// Eigen does the heavy lifting. Large products are split into a fixed
// number of row blocks so worker count never changes the result.
inline void matmul(const double* a, const double* b, double* c, int64_t m,
                   int64_t k, int64_t n, bool trans_a = false,
                   bool trans_b = false, bool accumulate = false) {
  using detail::CMapRM;
  using detail::MapRM;
  CMapRM A(a, trans_a ? k : m, trans_a ? m : k);
  CMapRM B(b, trans_b ? n : k, trans_b ? k : n);

  constexpr int64_t kRowBlocks = 4;
  constexpr int64_t kParallelMinFlops = 1 << 22;
  bool split = !trans_a && m >= kRowBlocks && m * k * n >= kParallelMinFlops;
  if (split) {
    parallel_for(0, kRowBlocks, [&](int64_t blk) {
      int64_t lo = m * blk / kRowBlocks;
      int64_t hi = m * (blk + 1) / kRowBlocks;
      if (lo == hi) return;
      MapRM Cb(c + lo * n, hi - lo, n);
      if (trans_b) {
        if (accumulate)
          Cb.noalias() += A.middleRows(lo, hi - lo) * B.transpose();
        else
          Cb.noalias() = A.middleRows(lo, hi - lo) * B.transpose();
      } else {
        if (accumulate)
          Cb.noalias() += A.middleRows(lo, hi - lo) * B;
        else
          Cb.noalias() = A.middleRows(lo, hi - lo) * B;
      }
    });
    return;
  }

  MapRM C(c, m, n);
  if (!trans_a && !trans_b) {
    if (accumulate)
      C.noalias() += A * B;
    else
      C.noalias() = A * B;
  } else if (trans_a && !trans_b) {
    if (accumulate)
      C.noalias() += A.transpose() * B;
    else
      C.noalias() = A.transpose() * B;
  } else if (!trans_a && trans_b) {
    if (accumulate)
      C.noalias() += A * B.transpose();
    else
      C.noalias() = A * B.transpose();
  } else {
    if (accumulate)
      C.noalias() += A.transpose() * B.transpose();
    else
      C.noalias() = A.transpose() * B.transpose();
  }
}

inline Tensor gaussian_tensor(const std::vector<int64_t>& shape, Rng& rng,
                              double stddev = 1.0) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * rng.gaussian();
  return t;
}

}  // namespace spe

#endif  // SPE_TENSOR_HPP_
