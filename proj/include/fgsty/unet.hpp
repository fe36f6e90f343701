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

#ifndef FGSTY_UNET_HPP_
#define FGSTY_UNET_HPP_

#include <span>
#include <string>
#include <vector>

#include "fgsty/nn.hpp"

namespace fgsty {

/// Architecture descriptor of the segmentation network.
struct UNetSpec {
  // One entry per level; level l runs at 1/2^l resolution.
  std::vector<int> widths = {16, 32, 64, 128};
  int in_channels = 3;
  double leak = 0.1;

  int levels() const { return static_cast<int>(widths.size()); }
  // Input height and width must be multiples of this.
  int size_multiple() const { return 1 << (levels() - 1); }

  bool operator==(const UNetSpec&) const = default;
};

/// U-shaped encoder-decoder producing one logit per pixel.
///
///   encoder level l: conv3x3 -> lrelu -> conv3x3 -> lrelu (-> maxpool)
///   decoder level l: upsample x2, concat skip l, conv3x3 -> lrelu
///   head:            conv1x1 -> logit
///
/// The output of the last decoder block is exposed as the feature map that
/// the pixel-wise domain discriminator taps.
template <typename T>
class UNet {
 public:
  explicit UNet(UNetSpec spec) : spec_(std::move(spec)) {
    if (spec_.widths.empty()) throw Error("UNet: no levels");
    const int levels = spec_.levels();
    int in = spec_.in_channels;
    std::size_t offset = 0;
    auto add = [&](std::vector<nn::Conv2d<T>>& v, int i, int o, int k) {
      v.emplace_back(i, o, k);
      v.back().bind(offset);
      offset += v.back().param_count();
    };
    for (int l = 0; l < levels; ++l) {
      add(enc_a_, in, spec_.widths[l], 3);
      add(enc_b_, spec_.widths[l], spec_.widths[l], 3);
      in = spec_.widths[l];
    }
    for (int l = levels - 2; l >= 0; --l) {
      add(dec_, spec_.widths[l + 1] + spec_.widths[l], spec_.widths[l], 3);
    }
    std::vector<nn::Conv2d<T>> head;
    add(head, spec_.widths[0], 1, 1);
    head_ = head.front();
    params_.assign(offset, T(0));
    grads_.assign(offset, T(0));
    pools_.resize(static_cast<std::size_t>(levels > 1 ? levels - 1 : 0));
  }

  const UNetSpec& spec() const { return spec_; }
  std::size_t param_count() const { return params_.size(); }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::vector<T>& grads() { return grads_; }
  const std::vector<T>& grads() const { return grads_; }
  void zero_grad() { std::fill(grads_.begin(), grads_.end(), T(0)); }
  int feature_channels() const { return spec_.widths[0]; }

  void init(Rng& rng) {
    std::span<T> p(params_);
    for (auto& c : enc_a_) c.init(p, rng);
    for (auto& c : enc_b_) c.init(p, rng);
    for (auto& c : dec_) c.init(p, rng);
    head_.init(p, rng, 0.5);
  }

  /// Zeroes the 1x1 head, making every output probability exactly 0.5.
  void zero_head() {
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(head_.offset()),
              params_.begin() +
                  static_cast<std::ptrdiff_t>(head_.offset() + head_.param_count()),
              T(0));
  }

  void check_input(const Tensor<T>& x) const {
    const int m = spec_.size_multiple();
    if (x.channels != spec_.in_channels) {
      throw DimensionMismatch("UNet: expected " +
                              std::to_string(spec_.in_channels) + " channels");
    }
    if (x.height % m != 0 || x.width % m != 0 || x.height == 0 || x.width == 0) {
      throw DimensionMismatch("UNet: input " + std::to_string(x.height) + "x" +
                              std::to_string(x.width) +
                              " is not a multiple of " + std::to_string(m));
    }
  }

  /// Returns logits (1 channel). Caches activations for backward().
  Tensor<T> forward(const Tensor<T>& x) {
    check_input(x);
    const int levels = spec_.levels();
    const T leak = static_cast<T>(spec_.leak);
    std::span<const T> p(params_);
    enc_a_out_.resize(levels);
    skips_.resize(levels);
    dec_out_.resize(dec_.size());

    Tensor<T> h = x;
    for (int l = 0; l < levels; ++l) {
      enc_a_out_[l] = enc_a_[l].forward(p, h);
      nn::leaky_relu(enc_a_out_[l], leak);
      skips_[l] = enc_b_[l].forward(p, enc_a_out_[l]);
      nn::leaky_relu(skips_[l], leak);
      h = l < levels - 1 ? pools_[l].forward(skips_[l]) : skips_[l];
    }
    for (int l = levels - 2, k = 0; l >= 0; --l, ++k) {
      const Tensor<T> cat =
          nn::concat_channels(nn::Upsample2<T>::forward(h), skips_[l]);
      dec_out_[k] = dec_[k].forward(p, cat);
      nn::leaky_relu(dec_out_[k], leak);
      h = dec_out_[k];
    }
    return head_.forward(p, h);
  }

  /// Inference-only forward: no caches are touched, so concurrent calls on
  /// a shared network are safe.
  Tensor<T> infer(const Tensor<T>& x) const {
    check_input(x);
    const int levels = spec_.levels();
    const T leak = static_cast<T>(spec_.leak);
    std::span<const T> p(params_);
    std::vector<Tensor<T>> skips(static_cast<std::size_t>(levels));
    Tensor<T> h = x;
    for (int l = 0; l < levels; ++l) {
      Tensor<T> a = enc_a_[l].apply(p, h);
      nn::leaky_relu(a, leak);
      skips[l] = enc_b_[l].apply(p, a);
      nn::leaky_relu(skips[l], leak);
      h = l < levels - 1 ? nn::MaxPool2<T>::apply(skips[l]) : skips[l];
    }
    for (int l = levels - 2, k = 0; l >= 0; --l, ++k) {
      h = dec_[k].apply(
          p, nn::concat_channels(nn::Upsample2<T>::forward(h), skips[l]));
      nn::leaky_relu(h, leak);
    }
    return head_.apply(p, h);
  }

  /// Frees everything cached by forward(); backward() then needs a new
  /// forward().
  void release_caches() {
    for (auto* v : {&enc_a_, &enc_b_, &dec_}) {
      for (auto& c : *v) c.release_cache();
    }
    head_.release_cache();
    for (auto& p : pools_) p.release_cache();
    enc_a_out_.clear();
    skips_.clear();
    dec_out_.clear();
  }

  /// Feature map from the last forward() (input of the head).
  const Tensor<T>& features() const {
    return dec_.empty() ? skips_.front() : dec_out_.back();
  }

  /// Accumulates dL/dparams given dL/dlogits and, optionally, an extra
  /// gradient arriving at the feature map.
  void backward(const Tensor<T>& dlogits, const Tensor<T>* dfeatures = nullptr) {
    const int levels = spec_.levels();
    const T leak = static_cast<T>(spec_.leak);
    std::span<const T> p(params_);
    std::span<T> g(grads_);

    Tensor<T> dh = head_.backward(p, g, dlogits);
    if (dfeatures != nullptr) {
      if (!dfeatures->same_shape(dh)) {
        throw DimensionMismatch("UNet::backward: feature gradient shape");
      }
      dh += *dfeatures;
    }
    std::vector<Tensor<T>> dskip(static_cast<std::size_t>(levels));
    for (int k = static_cast<int>(dec_.size()) - 1, l = 0; k >= 0; --k, ++l) {
      nn::leaky_relu_backward(dec_out_[k], dh, leak);
      Tensor<T> dcat = dec_[k].backward(p, g, dh);
      auto [dup, ds] = nn::split_channels(dcat, spec_.widths[l + 1]);
      dskip[l] = std::move(ds);
      dh = nn::Upsample2<T>::backward(dup);
    }
    for (int l = levels - 1; l >= 0; --l) {
      Tensor<T> db = l < levels - 1 ? pools_[l].backward(dh) : std::move(dh);
      if (l < levels - 1) db += dskip[l];
      nn::leaky_relu_backward(skips_[l], db, leak);
      Tensor<T> da = enc_b_[l].backward(p, g, db);
      nn::leaky_relu_backward(enc_a_out_[l], da, leak);
      dh = enc_a_[l].backward(p, g, da, l > 0);
    }
  }

 private:
  UNetSpec spec_;
  std::vector<nn::Conv2d<T>> enc_a_, enc_b_, dec_;
  nn::Conv2d<T> head_{1, 1, 1};
  std::vector<nn::MaxPool2<T>> pools_;
  std::vector<T> params_, grads_;
  std::vector<Tensor<T>> enc_a_out_, skips_, dec_out_;
};

}  // namespace fgsty

#endif  // FGSTY_UNET_HPP_
