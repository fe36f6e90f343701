// Copyright 2026 The fgsty Authors. All Rights Reserved.
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

#ifndef FGSTY_TENSOR_HPP_
#define FGSTY_TENSOR_HPP_

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace fgsty {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Feature map batch in channel-major layout: row c of the
/// channels x (batch * height * width) matrix holds channel c of every image,
/// image n occupying columns [n*H*W, (n+1)*H*W). A convolution is then a
/// single matrix product over the whole batch.
template <typename T>
struct Tensor {
  int channels = 0;
  int batch = 0;
  int height = 0;
  int width = 0;
  // Over-aligned so that Eigen's vectorized reductions split the same way on
  // every run; with malloc's alignment the summation order, and so the last
  // bits of a result, would depend on where the buffer lands.
  std::vector<T, Eigen::aligned_allocator<T>> data;

  Tensor() = default;
  Tensor(int c, int n, int h, int w)
      : channels(c), batch(n), height(h), width(w),
        data(static_cast<std::size_t>(c) * n * h * w, T(0)) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t cols() const { return plane() * batch; }
  std::size_t size() const { return data.size(); }

  T* row(int c) { return data.data() + static_cast<std::size_t>(c) * cols(); }
  const T* row(int c) const {
    return data.data() + static_cast<std::size_t>(c) * cols();
  }

  Eigen::Map<RowMat<T>> mat() {
    return {data.data(), channels, static_cast<Eigen::Index>(cols())};
  }
  Eigen::Map<const RowMat<T>> mat() const {
    return {data.data(), channels, static_cast<Eigen::Index>(cols())};
  }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && batch == o.batch && height == o.height &&
           width == o.width;
  }

  Tensor& operator+=(const Tensor& o) {
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
};

}  // namespace fgsty

#endif  // FGSTY_TENSOR_HPP_
