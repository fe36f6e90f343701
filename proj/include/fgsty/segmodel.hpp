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

#ifndef FGSTY_SEGMODEL_HPP_
#define FGSTY_SEGMODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fgsty/core.hpp"
#include "fgsty/metrics.hpp"
#include "fgsty/nn.hpp"
#include "fgsty/rng.hpp"
#include "fgsty/unet.hpp"

namespace fgsty {

/// Raised when a loss becomes NaN or infinite during training.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Per-pixel binary segmentation network (float parameters).
///
/// Single-writer: training mutates the network. predict() is const and uses a
/// cache-free forward pass, so several threads may call it between training
/// steps.
class SegModel {
 public:
  SegModel(const UNetSpec& spec, std::uint64_t init_seed);

  const UNetSpec& spec() const { return net_.spec(); }
  UNet<float>& net() { return net_; }
  const UNet<float>& net() const { return net_; }
  std::vector<float>& params() { return net_.params(); }
  const std::vector<float>& params() const { return net_.params(); }

  ProbMap predict(const Image& image) const;
  std::vector<ProbMap> predict_batch(std::span<const Image* const> images) const;

  /// Adapter for metrics::evaluate_model.
  Predictor predictor() const;

 private:
  UNet<float> net_;
};

using OptimState = nn::AdamState;

OptimState make_optimizer(const SegModel& model, double learning_rate);

/// Packs images into a network input (values shifted by -0.5).
Tensor<float> images_to_tensor(std::span<const Image* const> images);

/// Mean binary cross-entropy over pixels (restricted to `pixel_mask` when
/// given). Probabilities are clamped to [1e-7, 1 - 1e-7]. An all-false pixel
/// mask yields 0.
double bce_loss(const ProbMap& pred, const BinaryMask& target,
                const BinaryMask* pixel_mask = nullptr);

/// Foreground where predict(image) > t.
BinaryMask threshold_predict(const SegModel& model, const Image& image,
                             double t);

using LabeledPair = std::pair<const Image*, const BinaryMask*>;

/// One Adam step on the mean BCE of the batch. Returns the pre-step loss.
double train_step(SegModel& model, std::span<const LabeledPair> batch,
                  OptimState& opt);

/// One pass over `data` in an order shuffled by `rng`, batches of
/// `batch_size` (the last one may be short). Returns the mean step loss.
double train_epoch(SegModel& model, std::span<const LabeledPair> data,
                   int batch_size, OptimState& opt, Rng& rng);

/// A training batch with per-image loss weights: the loss is
/// sum_i weight_i * mean_pixels BCE(image_i). Images with weight 0 add no
/// gradient.
struct WeightedBatch {
  std::vector<const Image*> images;
  std::vector<BinaryMask> targets;
  std::vector<double> weights;

  void add(const Image* image, BinaryMask target, double weight) {
    images.push_back(image);
    targets.push_back(std::move(target));
    weights.push_back(weight);
  }
  std::size_t size() const { return images.size(); }
};

/// Training forward pass; the feature map stays readable through
/// model.net().features() until the next forward.
Tensor<float> forward_batch(SegModel& model, std::span<const Image* const> images);

/// Weighted loss of the logits from the last forward_batch() and its
/// backward pass, accumulated into the gradient buffer (the caller zeroes
/// it). `extra_feature_grad` is added at the feature map.
double backward_weighted(SegModel& model, const Tensor<float>& logits,
                         const WeightedBatch& batch,
                         const Tensor<float>* extra_feature_grad = nullptr);

/// forward_batch + backward_weighted.
double weighted_loss_and_grad(SegModel& model, const WeightedBatch& batch);

/// Converts logits of image i into a probability map.
ProbMap logits_to_prob(const Tensor<float>& logits, int index);

/// Writes a versioned checkpoint: magic, JSON architecture header, float32
/// parameter payload.
void save_checkpoint(const SegModel& model, const std::filesystem::path& path);

/// Loads a checkpoint; throws unless its architecture equals `expected`.
SegModel load_checkpoint(const std::filesystem::path& path,
                         const UNetSpec& expected);

/// Reads only the architecture descriptor of a checkpoint.
UNetSpec read_checkpoint_spec(const std::filesystem::path& path);

}  // namespace fgsty

#endif  // FGSTY_SEGMODEL_HPP_
