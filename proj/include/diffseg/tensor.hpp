// Copyright 2026 The diffseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "diffseg/errors.hpp"
#include "diffseg/rng.hpp"

namespace diffseg {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Dense row-major tensor of doubles, rank <= 4. Storage is shared between
// copies; ops that produce new values allocate fresh storage. Use clone()
// when an independent mutable buffer is required.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    buf_ = std::make_shared<std::vector<double>>(count(shape_), 0.0);
  }

  Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.buf_->begin(), t.buf_->end(), v);
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<double> values) {
    if (count(shape) != static_cast<std::int64_t>(values.size()))
      throw InvalidArgument("Tensor::from: value count does not match shape");
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = std::make_shared<std::vector<double>>(std::move(values));
    return t;
  }

  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : *t.buf_) v = stddev * rng.normal();
    return t;
  }

  static Tensor rand_uniform(std::vector<int> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : *t.buf_) v = rng.uniform(lo, hi);
    return t;
  }

  bool defined() const { return buf_ != nullptr; }
  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return buf_ ? static_cast<std::int64_t>(buf_->size()) : 0; }

  double* data() { return buf_->data(); }
  const double* data() const { return buf_->data(); }

  double& operator[](std::int64_t i) { return (*buf_)[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return (*buf_)[static_cast<std::size_t>(i)]; }

  double& at(int i, int j) { return (*buf_)[static_cast<std::size_t>(i) * dim(1) + j]; }
  double at(int i, int j) const { return (*buf_)[static_cast<std::size_t>(i) * dim(1) + j]; }
  double& at(int i, int j, int k) {
    return (*buf_)[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  double at(int i, int j, int k) const {
    return (*buf_)[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
  }
  double& at(int i, int j, int k, int l) {
    return (*buf_)[((static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<std::vector<double>>(*buf_);
    return t;
  }

  // View with a new shape over the same storage.
  Tensor reshaped(std::vector<int> shape) const {
    if (count(shape) != size()) throw InvalidArgument("Tensor::reshaped: element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.buf_ = buf_;
    return t;
  }

  void fill(double v) { std::fill(buf_->begin(), buf_->end(), v); }

  double sum() const {
    double s = 0.0;
    for (double v : *buf_) s += v;
    return s;
  }

  double abs_max() const {
    double s = 0.0;
    for (double v : *buf_) s = std::max(s, std::abs(v));
    return s;
  }

  bool all_finite() const {
    for (double v : *buf_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

  // Matrix view: rank-2 tensors map directly, higher ranks must pass rows/cols.
  MatMap mat() {
    require_rank2();
    return MatMap(data(), shape_[0], shape_[1]);
  }
  ConstMatMap mat() const {
    require_rank2();
    return ConstMatMap(data(), shape_[0], shape_[1]);
  }
  MatMap mat(int rows, int cols) {
    if (static_cast<std::int64_t>(rows) * cols != size())
      throw InvalidArgument("Tensor::mat: rows*cols != size");
    return MatMap(data(), rows, cols);
  }
  ConstMatMap mat(int rows, int cols) const {
    if (static_cast<std::int64_t>(rows) * cols != size())
      throw InvalidArgument("Tensor::mat: rows*cols != size");
    return ConstMatMap(data(), rows, cols);
  }
  VecMap vec() { return VecMap(data(), size()); }
  ConstVecMap vec() const { return ConstVecMap(data(), size()); }

 private:
  static std::int64_t count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw InvalidArgument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }
  void require_rank2() const {
    if (rank() != 2) throw InvalidArgument("Tensor::mat: expected rank-2, got " + shape_str());
  }

  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> buf_;
};

}  // namespace diffseg
