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

// Minimal CPU layers with explicit backward passes. Every layer caches what
// its backward pass needs during forward, so a layer instance is
// single-writer: forward and backward calls must alternate.

#ifndef FGSTY_NN_HPP_
#define FGSTY_NN_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fgsty/core.hpp"
#include "fgsty/rng.hpp"
#include "fgsty/tensor.hpp"

namespace fgsty::nn {

/// 'same'-padded convolution with square kernel 1 or 3, stride 1, bias.
/// Weights live in an external flat parameter vector at [offset, offset+count).
template <typename T>
class Conv2d {
 public:
  Conv2d(int in, int out, int kernel) : in_(in), out_(out), kernel_(kernel) {
    if (kernel != 1 && kernel != 3) throw Error("Conv2d: kernel must be 1 or 3");
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_) * in_ * kernel_ * kernel_;
  }
  std::size_t param_count() const { return weight_count() + out_; }
  void bind(std::size_t offset) { offset_ = offset; }
  std::size_t offset() const { return offset_; }

  /// He-normal weights scaled by `gain`; zero bias.
  void init(std::span<T> params, Rng& rng, double gain = 1.0) const {
    const double fan_in = static_cast<double>(in_) * kernel_ * kernel_;
    const double sd = gain * std::sqrt(2.0 / fan_in);
    for (std::size_t i = 0; i < weight_count(); ++i) {
      params[offset_ + i] = static_cast<T>(rng.normal(0.0, sd));
    }
    for (int o = 0; o < out_; ++o) params[offset_ + weight_count() + o] = T(0);
  }

  Tensor<T> forward(std::span<const T> params, const Tensor<T>& x) {
    if (x.channels != in_) {
      throw DimensionMismatch("Conv2d: expected " + std::to_string(in_) +
                              " input channels, got " +
                              std::to_string(x.channels));
    }
    shape_ = {x.batch, x.height, x.width};
    if (kernel_ == 3) {
      im2col(x, col_);
    } else {
      col_ = x.mat();
    }
    Tensor<T> y(out_, x.batch, x.height, x.width);
    y.mat().noalias() = weights(params) * col_;
    y.mat().colwise() += bias(params);
    return y;
  }

  /// Frees the activations kept for backward().
  void release_cache() { col_.resize(0, 0); }

  /// Forward without caching; safe to call concurrently.
  Tensor<T> apply(std::span<const T> params, const Tensor<T>& x) const {
    if (x.channels != in_) {
      throw DimensionMismatch("Conv2d: expected " + std::to_string(in_) +
                              " input channels, got " +
                              std::to_string(x.channels));
    }
    Tensor<T> y(out_, x.batch, x.height, x.width);
    if (kernel_ == 3) {
      RowMat<T> col;
      im2col(x, col);
      y.mat().noalias() = weights(params) * col;
    } else {
      y.mat().noalias() = weights(params) * x.mat();
    }
    y.mat().colwise() += bias(params);
    return y;
  }

  /// Accumulates parameter gradients into `grads`; returns dL/dx when
  /// `need_input_grad`, else an empty tensor.
  Tensor<T> backward(std::span<const T> params, std::span<T> grads,
                     const Tensor<T>& dy, bool need_input_grad = true) {
    const auto [n, h, w] = shape_;
    Eigen::Map<RowMat<T>> dw(grads.data() + offset_, out_,
                             static_cast<Eigen::Index>(in_) * kernel_ * kernel_);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(
        grads.data() + offset_ + weight_count(), out_);
    dw.noalias() += dy.mat() * col_.transpose();
    db += dy.mat().rowwise().sum();
    if (!need_input_grad) return {};
    Tensor<T> dx(in_, n, h, w);
    if (kernel_ == 3) {
      RowMat<T> dcol = weights(params).transpose() * dy.mat();
      col2im(dcol, dx);
    } else {
      dx.mat().noalias() = weights(params).transpose() * dy.mat();
    }
    return dx;
  }

 private:
  struct Shape {
    int batch = 0, height = 0, width = 0;
  };

  Eigen::Map<const RowMat<T>> weights(std::span<const T> params) const {
    return {params.data() + offset_, out_,
            static_cast<Eigen::Index>(in_) * kernel_ * kernel_};
  }
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(
      std::span<const T> params) const {
    return {params.data() + offset_ + weight_count(), out_};
  }

  static void im2col(const Tensor<T>& x, RowMat<T>& col) {
    const int h = x.height, w = x.width;
    const std::size_t plane = x.plane(), cols = x.cols();
    col.resize(static_cast<Eigen::Index>(x.channels) * 9,
               static_cast<Eigen::Index>(cols));
    for (int c = 0; c < x.channels; ++c) {
      const T* src = x.row(c);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          T* dst = col.data() + static_cast<std::size_t>((c * 3 + ky) * 3 + kx) * cols;
          const int dy = ky - 1, dx = kx - 1;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int n = 0; n < x.batch; ++n) {
            for (int y = 0; y < h; ++y) {
              T* d = dst + n * plane + static_cast<std::size_t>(y) * w;
              const int ys = y + dy;
              if (ys < 0 || ys >= h) {
                std::fill(d, d + w, T(0));
                continue;
              }
              const T* s = src + n * plane + static_cast<std::size_t>(ys) * w;
              if (x0 > 0) d[0] = T(0);
              if (x1 < w) d[w - 1] = T(0);
              std::memcpy(d + x0, s + x0 + dx, sizeof(T) * (x1 - x0));
            }
          }
        }
      }
    }
  }

  static void col2im(const RowMat<T>& col, Tensor<T>& dx) {
    const int h = dx.height, w = dx.width;
    const std::size_t plane = dx.plane(), cols = dx.cols();
    for (int c = 0; c < dx.channels; ++c) {
      T* dst = dx.row(c);
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T* src =
              col.data() + static_cast<std::size_t>((c * 3 + ky) * 3 + kx) * cols;
          const int dy = ky - 1, ddx = kx - 1;
          const int x0 = std::max(0, -ddx), x1 = std::min(w, w - ddx);
          for (int n = 0; n < dx.batch; ++n) {
            for (int y = 0; y < h; ++y) {
              const int ys = y + dy;
              if (ys < 0 || ys >= h) continue;
              const T* s = src + n * plane + static_cast<std::size_t>(y) * w;
              T* d = dst + n * plane + static_cast<std::size_t>(ys) * w;
              for (int xx = x0; xx < x1; ++xx) d[xx + ddx] += s[xx];
            }
          }
        }
      }
    }
  }

  int in_, out_, kernel_;
  std::size_t offset_ = 0;
  Shape shape_;
  RowMat<T> col_;
};

/// Leaky ReLU applied in place; backward reads the sign from the output.
template <typename T>
void leaky_relu(Tensor<T>& x, T slope) {
  for (T& v : x.data) v = v > T(0) ? v : v * slope;
}

template <typename T>
void leaky_relu_backward(const Tensor<T>& y, Tensor<T>& dy, T slope) {
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    if (!(y.data[i] > T(0))) dy.data[i] *= slope;
  }
}

/// 2x2 max pooling, stride 2.
template <typename T>
class MaxPool2 {
 public:
  void release_cache() { std::vector<std::uint8_t>().swap(argmax_); }

  /// Forward without recording argmax positions.
  static Tensor<T> apply(const Tensor<T>& x) {
    if (x.height % 2 != 0 || x.width % 2 != 0) {
      throw DimensionMismatch("MaxPool2: odd spatial size");
    }
    Tensor<T> y(x.channels, x.batch, x.height / 2, x.width / 2);
    const int hw = x.width, oh = y.height, ow = y.width;
    std::size_t k = 0;
    for (int c = 0; c < x.channels; ++c) {
      for (int n = 0; n < x.batch; ++n) {
        const T* s = x.row(c) + n * x.plane();
        for (int yy = 0; yy < oh; ++yy) {
          for (int xx = 0; xx < ow; ++xx, ++k) {
            const T* p = s + (2 * yy) * hw + 2 * xx;
            y.data[k] = std::max(std::max(p[0], p[1]), std::max(p[hw], p[hw + 1]));
          }
        }
      }
    }
    return y;
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.height % 2 != 0 || x.width % 2 != 0) {
      throw DimensionMismatch("MaxPool2: odd spatial size");
    }
    in_ = {x.channels, x.batch, x.height, x.width};
    Tensor<T> y(x.channels, x.batch, x.height / 2, x.width / 2);
    argmax_.assign(y.size(), 0);
    const int hw = x.width, oh = y.height, ow = y.width;
    std::size_t k = 0;
    for (int c = 0; c < x.channels; ++c) {
      for (int n = 0; n < x.batch; ++n) {
        const T* s = x.row(c) + n * x.plane();
        for (int yy = 0; yy < oh; ++yy) {
          for (int xx = 0; xx < ow; ++xx, ++k) {
            const T* p = s + (2 * yy) * hw + 2 * xx;
            const T v[4] = {p[0], p[1], p[hw], p[hw + 1]};
            std::uint8_t best = 0;
            for (std::uint8_t q = 1; q < 4; ++q) {
              if (v[q] > v[best]) best = q;
            }
            argmax_[k] = best;
            y.data[k] = v[best];
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(in_[0], in_[1], in_[2], in_[3]);
    const int hw = dx.width, oh = dy.height, ow = dy.width;
    std::size_t k = 0;
    for (int c = 0; c < dx.channels; ++c) {
      for (int n = 0; n < dx.batch; ++n) {
        T* d = dx.row(c) + n * dx.plane();
        for (int yy = 0; yy < oh; ++yy) {
          for (int xx = 0; xx < ow; ++xx, ++k) {
            const std::uint8_t q = argmax_[k];
            d[(2 * yy + (q >> 1)) * hw + 2 * xx + (q & 1)] += dy.data[k];
          }
        }
      }
    }
    return dx;
  }

 private:
  std::array<int, 4> in_ = {0, 0, 0, 0};
  std::vector<std::uint8_t> argmax_;
};

/// Bilinear x2 upsampling with half-pixel centers (align_corners = false).
template <typename T>
class Upsample2 {
 public:
  static Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y(x.channels, x.batch, x.height * 2, x.width * 2);
    const auto ry = taps(x.height), rx = taps(x.width);
    std::vector<T> tmp(static_cast<std::size_t>(x.height) * y.width);
    for (int c = 0; c < x.channels; ++c) {
      for (int n = 0; n < x.batch; ++n) {
        const T* s = x.row(c) + n * x.plane();
        T* d = y.row(c) + n * y.plane();
        for (int i = 0; i < x.height; ++i) {
          for (int j = 0; j < y.width; ++j) {
            const Tap& t = rx[j];
            tmp[i * y.width + j] =
                s[i * x.width + t.i0] * t.w0 + s[i * x.width + t.i1] * t.w1;
          }
        }
        for (int i = 0; i < y.height; ++i) {
          const Tap& t = ry[i];
          for (int j = 0; j < y.width; ++j) {
            d[i * y.width + j] =
                tmp[t.i0 * y.width + j] * t.w0 + tmp[t.i1 * y.width + j] * t.w1;
          }
        }
      }
    }
    return y;
  }

  static Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.channels, dy.batch, dy.height / 2, dy.width / 2);
    const auto ry = taps(dx.height), rx = taps(dx.width);
    std::vector<T> tmp(static_cast<std::size_t>(dx.height) * dy.width);
    for (int c = 0; c < dy.channels; ++c) {
      for (int n = 0; n < dy.batch; ++n) {
        const T* s = dy.row(c) + n * dy.plane();
        T* d = dx.row(c) + n * dx.plane();
        std::fill(tmp.begin(), tmp.end(), T(0));
        for (int i = 0; i < dy.height; ++i) {
          const Tap& t = ry[i];
          for (int j = 0; j < dy.width; ++j) {
            const T g = s[i * dy.width + j];
            tmp[t.i0 * dy.width + j] += g * t.w0;
            tmp[t.i1 * dy.width + j] += g * t.w1;
          }
        }
        for (int i = 0; i < dx.height; ++i) {
          for (int j = 0; j < dy.width; ++j) {
            const Tap& t = rx[j];
            const T g = tmp[i * dy.width + j];
            d[i * dx.width + t.i0] += g * t.w0;
            d[i * dx.width + t.i1] += g * t.w1;
          }
        }
      }
    }
    return dx;
  }

 private:
  struct Tap {
    int i0, i1;
    T w0, w1;
  };

  static std::vector<Tap> taps(int in) {
    std::vector<Tap> out(static_cast<std::size_t>(in) * 2);
    for (int o = 0; o < in * 2; ++o) {
      double src = (o + 0.5) / 2.0 - 0.5;
      if (src < 0.0) src = 0.0;
      int i0 = static_cast<int>(std::floor(src));
      if (i0 > in - 1) i0 = in - 1;
      const int i1 = std::min(i0 + 1, in - 1);
      const double f = src - i0;
      out[o] = {i0, i1, static_cast<T>(1.0 - f), static_cast<T>(f)};
    }
    return out;
  }
};

/// Stacks channels of a then b.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.batch != b.batch || a.height != b.height || a.width != b.width) {
    throw DimensionMismatch("concat_channels: shape mismatch");
  }
  Tensor<T> y(a.channels + b.channels, a.batch, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(),
            y.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& y, int first) {
  Tensor<T> a(first, y.batch, y.height, y.width);
  Tensor<T> b(y.channels - first, y.batch, y.height, y.width);
  std::copy(y.data.begin(), y.data.begin() + static_cast<std::ptrdiff_t>(a.size()),
            a.data.begin());
  std::copy(y.data.begin() + static_cast<std::ptrdiff_t>(a.size()), y.data.end(),
            b.data.begin());
  return {std::move(a), std::move(b)};
}

template <typename T>
T sigmoid(T z) {
  return z >= T(0) ? T(1) / (T(1) + std::exp(-z))
                   : std::exp(z) / (T(1) + std::exp(z));
}

/// Probability floor used by the cross-entropy.
inline constexpr double kProbClamp = 1e-7;

/// Weighted binary cross-entropy on logits:
///   L = sum_i w_i * -[y_i log p_i + (1 - y_i) log(1 - p_i)],
///   p_i = clamp(sigmoid(z_i), 1e-7, 1 - 1e-7).
/// When `dlogits` is given it receives dL/dz, which is w_i (p_i - y_i) inside
/// the clamp range and 0 where the clamp is active.
template <typename T>
double weighted_bce(const Tensor<T>& logits, std::span<const float> targets,
                    std::span<const float> weights, Tensor<T>* dlogits) {
  if (targets.size() != logits.size() || weights.size() != logits.size()) {
    throw DimensionMismatch("weighted_bce: size mismatch");
  }
  if (dlogits != nullptr) {
    *dlogits = Tensor<T>(logits.channels, logits.batch, logits.height,
                         logits.width);
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double w = weights[i];
    if (w == 0.0) continue;
    const double p = sigmoid(static_cast<double>(logits.data[i]));
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    const double y = targets[i];
    loss += w * -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    if (dlogits != nullptr && p == pc) {
      dlogits->data[i] = static_cast<T>(w * (p - y));
    }
  }
  return loss;
}

/// Adam with bias correction.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr) : m(n, 0.0), v(n, 0.0), learning_rate(lr) {}
};

template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, AdamState& s) {
  if (s.m.size() != params.size() || grads.size() != params.size()) {
    throw DimensionMismatch("adam_update: state size mismatch");
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  const double lr = s.learning_rate;
  if (lr == 0.0) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
      s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    }
    return;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    params[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + s.eps));
  }
}

}  // namespace fgsty::nn

#endif  // FGSTY_NN_HPP_
