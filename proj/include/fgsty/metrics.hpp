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

#ifndef FGSTY_METRICS_HPP_
#define FGSTY_METRICS_HPP_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fgsty/core.hpp"

namespace fgsty {

enum class MaskClass { kForeground, kBackground };

struct IoUReport {
  double iou_fg = 0.0;
  double iou_bg = 0.0;
  double miou = 0.0;
};

/// |a ∩ b| / |a ∪ b| over the pixels of `cls`. When neither mask contains the
/// class the union is empty and the IoU is 1.
double iou(const BinaryMask& a, const BinaryMask& b, MaskClass cls);

/// Mean of foreground and background IoU. Symmetric in its arguments.
IoUReport miou(const BinaryMask& a, const BinaryMask& b);

using Predictor = std::function<ProbMap(const Image&)>;

struct SampleScore {
  std::string sample_id;
  IoUReport report;
};

struct Evaluation {
  // Mean over samples of the per-sample mIoU.
  double mean_miou = 0.0;
  std::vector<SampleScore> per_sample;
};

/// Thresholds predictions at `threshold` (strict) and averages per-sample
/// mIoU. Every sample must carry a mask.
Evaluation evaluate_model(const Predictor& predict,
                          const std::vector<Sample>& samples,
                          double threshold = 0.5);

/// Writes `sample_id,iou_fg,iou_bg,miou` rows.
void write_scores_csv(const Evaluation& eval,
                      const std::filesystem::path& path);

}  // namespace fgsty

#endif  // FGSTY_METRICS_HPP_
