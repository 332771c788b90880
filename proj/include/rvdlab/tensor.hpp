// Copyright (c) 2026 rvdlab authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cassert>
#include <cstddef>
#include <memory>
#include <numeric>
#include <vector>

#include "rvdlab/common.hpp"

namespace rvd {

// Every tensor buffer starts at the same 64-byte alignment phase so that
// vectorized reductions (which peel to an alignment boundary before the SIMD
// body) associate additions identically no matter where the allocator placed
// the buffer — a requirement for bit-reproducible training runs.
template <typename T, std::size_t Align>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) {}
  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, std::size_t n) {
    ::operator delete(p, n * sizeof(T), std::align_val_t(Align));
  }
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
  friend bool operator!=(const AlignedAllocator&, const AlignedAllocator&) { return false; }
};

using TensorBuffer = std::vector<double, AlignedAllocator<double, 64>>;

// Dense row-major double tensor. Rank is dynamic (1..4 used in practice);
// NCHW convention for rank-4. Copies are shallow (shared buffer) — use
// clone() for a deep copy. reshaped() shares the buffer with a new shape.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (int d : shape_) {
      require(d > 0, ErrorKind::dimension, "tensor dims must be positive");
      n *= static_cast<std::size_t>(d);
    }
    buf_ = std::make_shared<TensorBuffer>(n, 0.0);
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<double> values) {
    Tensor t(std::move(shape));
    require(values.size() == t.size(), ErrorKind::dimension,
            "value count does not match tensor shape");
    std::copy(values.begin(), values.end(), t.buf_->begin());
    return t;
  }

  bool defined() const { return static_cast<bool>(buf_); }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const {
    assert(i >= 0 && i < ndim());
    return shape_[static_cast<std::size_t>(i)];
  }
  const std::vector<int>& shape() const { return shape_; }
  std::size_t size() const { return buf_ ? buf_->size() : 0; }

  double* data() { return buf_->data(); }
  const double* data() const { return buf_->data(); }

  double& operator[](std::size_t i) { return (*buf_)[i]; }
  double operator[](std::size_t i) const { return (*buf_)[i]; }

  // Rank-4 accessor (NCHW).
  double& at(int n, int c, int h, int w) { return (*buf_)[idx4(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return (*buf_)[idx4(n, c, h, w)]; }

  // Rank-2 accessor (HW).
  double& at(int h, int w) {
    assert(ndim() == 2);
    return (*buf_)[static_cast<std::size_t>(h) * shape_[1] + w];
  }
  double at(int h, int w) const {
    assert(ndim() == 2);
    return (*buf_)[static_cast<std::size_t>(h) * shape_[1] + w];
  }

  std::size_t idx4(int n, int c, int h, int w) const {
    assert(ndim() == 4);
    assert(n >= 0 && n < shape_[0] && c >= 0 && c < shape_[1]);
    assert(h >= 0 && h < shape_[2] && w >= 0 && w < shape_[3]);
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Tensor reshaped(std::vector<int> shape) const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    require(n == size(), ErrorKind::dimension, "reshape changes element count");
    Tensor t;
    t.buf_ = buf_;
    t.shape_ = std::move(shape);
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.buf_ = std::make_shared<TensorBuffer>(*buf_);
    return t;
  }

  void fill(double v) { std::fill(buf_->begin(), buf_->end(), v); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool shares_buffer(const Tensor& other) const { return buf_ == other.buf_; }

 private:
  std::shared_ptr<TensorBuffer> buf_;
  std::vector<int> shape_;
};

}  // namespace rvd
