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

#ifndef FGSTY_ADVERSARIAL_HPP_
#define FGSTY_ADVERSARIAL_HPP_

#include <cmath>
#include <span>
#include <vector>

#include "fgsty/config.hpp"
#include "fgsty/cpl.hpp"
#include "fgsty/nn.hpp"
#include "fgsty/segmodel.hpp"

namespace fgsty {

/// Gradient reversal: identity forward.
template <typename T>
Tensor<T> grl_forward(const Tensor<T>& x) {
  return x;
}

/// Gradient reversal backward: -lambda * upstream.
template <typename T>
Tensor<T> grl_backward(const Tensor<T>& upstream, double lambda) {
  if (!(lambda >= 0.0)) throw Error("grl_backward: lambda must be >= 0");
  Tensor<T> g = upstream;
  const T s = static_cast<T>(-lambda);
  for (T& v : g.data) v *= s;
  return g;
}

/// GRL strength at training progress p in [0,1] under cfg.grl_schedule.
double grl_lambda_at(const ExperimentConfig& cfg, double progress);

/// Per-location domain classifier over a feature map:
///   conv3x3 (in -> width) -> lrelu -> conv1x1 -> lrelu -> conv1x1 -> logit.
template <typename T>
class PixelDiscriminator {
 public:
  PixelDiscriminator(int in_channels, int width, double leak = 0.1)
      : c1_(in_channels, width, 3), c2_(width, width, 1), c3_(width, 1, 1),
        leak_(static_cast<T>(leak)) {
    std::size_t off = 0;
    for (auto* c : {&c1_, &c2_, &c3_}) {
      c->bind(off);
      off += c->param_count();
    }
    params_.assign(off, T(0));
    grads_.assign(off, T(0));
  }

  void init(Rng& rng) {
    std::span<T> p(params_);
    c1_.init(p, rng);
    c2_.init(p, rng);
    c3_.init(p, rng, 0.5);
  }

  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::vector<T>& grads() { return grads_; }
  void zero_grad() { std::fill(grads_.begin(), grads_.end(), T(0)); }

  /// Logits, same spatial size as the input. Caches for backward().
  Tensor<T> forward(const Tensor<T>& x) {
    std::span<const T> p(params_);
    a1_ = c1_.forward(p, x);
    nn::leaky_relu(a1_, leak_);
    a2_ = c2_.forward(p, a1_);
    nn::leaky_relu(a2_, leak_);
    return c3_.forward(p, a2_);
  }

  /// Domain probabilities without touching caches.
  Tensor<T> predict(const Tensor<T>& x) const {
    std::span<const T> p(params_);
    Tensor<T> h = c1_.apply(p, x);
    nn::leaky_relu(h, leak_);
    h = c2_.apply(p, h);
    nn::leaky_relu(h, leak_);
    h = c3_.apply(p, h);
    for (T& v : h.data) v = nn::sigmoid(v);
    return h;
  }

  /// Accumulates parameter gradients; returns dL/dinput.
  Tensor<T> backward(const Tensor<T>& dlogits) {
    std::span<const T> p(params_);
    std::span<T> g(grads_);
    Tensor<T> d = c3_.backward(p, g, dlogits);
    nn::leaky_relu_backward(a2_, d, leak_);
    d = c2_.backward(p, g, d);
    nn::leaky_relu_backward(a1_, d, leak_);
    return c1_.backward(p, g, d);
  }

 private:
  nn::Conv2d<T> c1_, c2_, c3_;
  T leak_;
  std::vector<T> params_, grads_;
  Tensor<T> a1_, a2_;
};

template <typename T>
struct DomainLoss {
  double loss = 0.0;      // mean per-pixel BCE
  double accuracy = 0.0;  // fraction of pixels classified correctly
  Tensor<T> dfeatures;    // dLoss/dfeatures
};

/// Mean per-pixel BCE of D on `features` against per-image domain labels
/// (0 = source side, 1 = target). Zeroes and fills D's gradients.
template <typename T>
DomainLoss<T> domain_loss_and_grad(PixelDiscriminator<T>& d,
                                   const Tensor<T>& features,
                                   std::span<const int> domain_labels) {
  if (domain_labels.size() != static_cast<std::size_t>(features.batch)) {
    throw DimensionMismatch("domain_loss_and_grad: one label per image");
  }
  const Tensor<T> logits = d.forward(features);
  const std::size_t plane = logits.plane();
  const float w = 1.0f / static_cast<float>(logits.size());
  std::vector<float> targets(logits.size()), weights(logits.size(), w);
  DomainLoss<T> out;
  std::size_t correct = 0;
  for (std::size_t n = 0; n < domain_labels.size(); ++n) {
    const float y = domain_labels[n] != 0 ? 1.0f : 0.0f;
    for (std::size_t i = 0; i < plane; ++i) {
      targets[n * plane + i] = y;
      const bool says_target = logits.data[n * plane + i] > T(0);
      if (says_target == (y > 0.5f)) ++correct;
    }
  }
  Tensor<T> dlogits;
  out.loss = nn::weighted_bce(logits, targets, weights, &dlogits);
  if (!std::isfinite(out.loss)) throw TrainingDiverged("non-finite adversarial loss");
  out.accuracy = static_cast<double>(correct) / static_cast<double>(logits.size());
  d.zero_grad();
  out.dfeatures = d.backward(dlogits);
  return out;
}

struct AdvEpochStats {
  EpochStats m;               // M's task terms
  double r_seg_loss = 0.0;    // R's source loss (0 when R is not trained)
  double dm_loss = 0.0;       // discriminator on M's features
  double dm_accuracy = 0.0;
  double dr_loss = 0.0;       // discriminator on R's features
  double dr_accuracy = 0.0;
  double lambda = 0.0;        // GRL strength at the end of the epoch
};

/// Models and optimizer states taking part in adversarial adaptation. R and
/// its discriminator are optional; when `train_r` is set R is updated on
/// its source loss plus its own adversarial term.
struct AdvParts {
  SegModel* m = nullptr;
  OptimState* opt_m = nullptr;
  PixelDiscriminator<float>* dm = nullptr;
  OptimState* opt_dm = nullptr;
  SegModel* r = nullptr;
  OptimState* opt_r = nullptr;
  PixelDiscriminator<float>* dr = nullptr;
  OptimState* opt_dr = nullptr;
  bool train_r = true;
};

/// One epoch of pseudo-label adaptation with pixel-wise adversarial
/// alignment. Per step: M takes its step (task terms plus reversed domain
/// gradient, labeled images counting as source side); D_m is updated on the
/// same features; then, if enabled, R and D_r do the same with R's
/// labeled set and the same target batch. `progress_begin/end` place this
/// epoch on the GRL schedule.
AdvEpochStats adv_train_epoch(AdvParts& parts,
                              std::span<const LabeledPair> m_labeled,
                              std::span<const LabeledPair> r_labeled,
                              const TargetSampler& targets,
                              PseudoLabelMode mode, const ExperimentConfig& cfg,
                              Rng& rng, double progress_begin,
                              double progress_end);

}  // namespace fgsty

#endif  // FGSTY_ADVERSARIAL_HPP_
