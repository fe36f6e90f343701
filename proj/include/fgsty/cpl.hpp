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

#ifndef FGSTY_CPL_HPP_
#define FGSTY_CPL_HPP_

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fgsty/config.hpp"
#include "fgsty/core.hpp"
#include "fgsty/rng.hpp"
#include "fgsty/segmodel.hpp"

namespace fgsty {

struct PseudoLabelDecision {
  bool accepted = false;
  double agreement_miou = 0.0;
  std::optional<BinaryMask> label;  // y1 & y2, present iff accepted
  BinaryMask y1;
  BinaryMask y2;
};

/// Thresholds both maps at `threshold` and accepts when
/// mIoU(y1, y2) > alpha (strict). The label is the intersection.
PseudoLabelDecision consensus_label(const ProbMap& m_pred, const ProbMap& r_pred,
                                    double alpha, double threshold = 0.5);

/// Foreground where pred > t; always accepted.
BinaryMask naive_pl(const ProbMap& pred, double t);

/// Draws unlabeled target images: a domain uniformly, then a sample
/// uniformly within it (with replacement).
class TargetSampler {
 public:
  explicit TargetSampler(std::vector<std::vector<const Image*>> domains);

  const Image* draw(Rng& rng, int* domain_index = nullptr) const;
  std::size_t domain_count() const { return domains_.size(); }
  std::size_t total() const;

 private:
  std::vector<std::vector<const Image*>> domains_;
};

enum class PseudoLabelMode {
  kNone,       // target images only feed the feature hook
  kNaive,      // threshold M's prediction at pl_threshold
  kConsensus,  // agreement gate between M and a reference model R
};

struct StepStats {
  double seg_loss = 0.0;  // mean BCE over the labeled images
  double cpl_loss = 0.0;  // mean BCE over accepted targets (0 if none)
  int n_accepted = 0;
  int n_rejected = 0;
};

/// Optional adversarial coupling: receives the feature map of the combined
/// forward pass (labeled images first, then targets) and returns the
/// gradient to add at the feature map, or nothing.
using FeatureHook =
    std::function<std::optional<Tensor<float>>(const Tensor<float>& features,
                                               int n_labeled)>;

/// One optimizer step on
///   w_seg * mean BCE(M(labeled)) + w_cpl * mean over accepted BCE(M(x), y_hat)
/// with pseudo-labels computed from the same forward pass of M and, for
/// consensus, from R's inference. Labeled and target images share one
/// forward pass.
StepStats pseudo_label_step(SegModel& m, const SegModel* r,
                            std::span<const LabeledPair> labeled,
                            std::span<const Image* const> targets,
                            PseudoLabelMode mode, const ExperimentConfig& cfg,
                            OptimState& opt, const FeatureHook* hook = nullptr);

struct EpochStats {
  double seg_loss = 0.0;  // mean over steps
  double cpl_loss = 0.0;  // mean over steps with at least one acceptance
  int n_accepted = 0;
  int n_rejected = 0;
  int steps = 0;
};

/// One adaptation epoch: the labeled set is visited once in shuffled order,
/// each labeled batch paired with a target batch of the same size.
EpochStats pseudo_label_epoch(SegModel& m, const SegModel* r,
                              std::span<const LabeledPair> labeled,
                              const TargetSampler& targets, PseudoLabelMode mode,
                              const ExperimentConfig& cfg, OptimState& opt,
                              Rng& rng, const FeatureHook* hook = nullptr);

/// CPL epoch of M against a fixed reference R on the style-adapted set.
EpochStats cpl_train_epoch(SegModel& m, const SegModel& r,
                           const DatasetSplit& ss,
                           const std::vector<Sample>& target_unlabeled,
                           const ExperimentConfig& cfg, OptimState& opt,
                           Rng& rng);

struct SweepRow {
  double alpha = 0.0;
  int n_accepted = 0;
  double mean_quality = 0.0;     // mIoU(y1 & y2, GT) over accepted
  double mean_y1_quality = 0.0;  // mIoU(y1, GT) over the same instances
};

/// Acceptance counts and label quality per alpha, against ground truth.
std::vector<SweepRow> pseudo_label_sweep(const SegModel& m, const SegModel& r,
                                         const std::vector<Sample>& targets_labeled,
                                         const std::vector<double>& alphas,
                                         double threshold = 0.5);

/// Columns: alpha, n_accepted, mean_quality, mean_y1_quality.
void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::filesystem::path& path);

}  // namespace fgsty

#endif  // FGSTY_CPL_HPP_
