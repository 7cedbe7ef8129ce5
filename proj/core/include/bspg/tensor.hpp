/* Copyright 2026 the bspg authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "bspg/errors.hpp"
#include "bspg/rng.hpp"

namespace bspg {

// Scalar type of the production pipeline. The numeric stack is templated so
// tests can instantiate the same code in double for oracle comparisons and
// finite-difference gradient checks.
using real = float;

template <typename S>
using MatrixMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatrixMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using VectorMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <typename S>
using ConstVectorMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;

/// Dense row-major tensor. Rank is dynamic; indexing helpers cover the
/// ranks used in this project (1-4).
template <typename S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), S(0));
  }
  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, S value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }
  static Tensor ones(std::vector<int> shape) { return full(std::move(shape), S(1)); }
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<S>(rng.normal(0.0, stddev));
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  S& at(int i, int j) { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }
  const S& at(int i, int j) const { return data_[static_cast<std::size_t>(i) * dim(1) + j]; }
  S& at(int i, int j, int k) {
    return data_[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  const S& at(int i, int j, int k) const {
    return data_[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  S& at(int i, int j, int k, int l) {
    return data_[((static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
  }
  const S& at(int i, int j, int k, int l) const {
    return data_[((static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
  }

  void fill(S value) { std::fill(data_.begin(), data_.end(), value); }
  void zero() { fill(S(0)); }

  Tensor reshaped(std::vector<int> shape) const {
    require(numel_of(shape) == numel(), ErrorKind::shape, "reshape changes element count");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const S& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  /// View as a rows x cols Eigen matrix (row-major, no copy).
  MatrixMap<S> mat(int rows, int cols) {
    require(static_cast<std::size_t>(rows) * cols == numel(), ErrorKind::shape,
            "matrix view size mismatch");
    return MatrixMap<S>(data(), rows, cols);
  }
  ConstMatrixMap<S> mat(int rows, int cols) const {
    require(static_cast<std::size_t>(rows) * cols == numel(), ErrorKind::shape,
            "matrix view size mismatch");
    return ConstMatrixMap<S>(data(), rows, cols);
  }
  VectorMap<S> vec() { return VectorMap<S>(data(), static_cast<Eigen::Index>(numel())); }
  ConstVectorMap<S> vec() const {
    return ConstVectorMap<S>(data(), static_cast<Eigen::Index>(numel()));
  }

  Tensor& operator+=(const Tensor& o) {
    require(same_shape(o), ErrorKind::shape, "tensor += shape mismatch");
    vec() += o.vec();
    return *this;
  }
  Tensor& operator*=(S s) {
    vec() *= s;
    return *this;
  }

  static std::size_t numel_of(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      require(d >= 0, ErrorKind::shape, "negative tensor dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

 private:
  // Aligned storage keeps Eigen's vectorized reductions on a fixed
  // scalar/SIMD split, so results do not depend on where the heap happened
  // to place the buffer. Seed-determinism relies on this.
  std::vector<int> shape_;
  std::vector<S, Eigen::aligned_allocator<S>> data_;
};

template <typename S>
std::string shape_string(const Tensor<S>& t) {
  std::string s = "(";
  for (int i = 0; i < t.rank(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.dim(i));
  }
  return s + ")";
}

}  // namespace bspg
