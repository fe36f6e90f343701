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

#ifndef FGSTY_CONFIG_HPP_
#define FGSTY_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fgsty {

struct LossWeights {
  double seg = 1.0;
  double cpl = 1.0;
  double adv = 1.0;

  bool operator==(const LossWeights&) const = default;
};

/// Every hyperparameter of an experiment. Serializes to JSON with exactly
/// these field names.
struct ExperimentConfig {
  // Consensus gate: accept a pseudo-label when mIoU(y1, y2) > alpha.
  double alpha = 0.8;
  // Naive pseudo-labeling threshold.
  double pl_threshold = 0.4;
  // Threshold turning probabilities into masks for evaluation and consensus.
  double predict_threshold = 0.5;
  int n_style_images = 10;
  double learning_rate = 3e-3;
  // Total epochs; pretrain_fraction of them warm-start before adaptation.
  int epochs = 12;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double grl_lambda = 0.1;
  // "constant" or "ramp" (lambda * (2 / (1 + exp(-10 p)) - 1)).
  std::string grl_schedule = "constant";
  double wct_epsilon = 1e-5;
  LossWeights loss_weights;

  // Working resolution (square) for ingestion and generation.
  int resolution = 64;
  std::vector<int> model_widths = {16, 32, 64, 128};
  int disc_width = 16;
  double pretrain_fraction = 0.5;
  // Synthetic preset sizes per domain.
  int suite_train = 96;
  int suite_test = 48;
  // Fraction of the source train split kept (source-size sweeps).
  double source_fraction = 1.0;

  /// Throws fgsty::Error naming the first violated invariant.
  void validate() const;

  int pretrain_epochs() const;
  int adapt_epochs() const { return epochs - pretrain_epochs(); }

  bool operator==(const ExperimentConfig&) const = default;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing fields keep their defaults; unknown fields are rejected.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path);

/// Applies a `key=value` override. Nested fields use dots
/// ("loss_weights.cpl"). The value is parsed as JSON, falling back to a
/// plain string. Unknown keys throw.
void apply_override(ExperimentConfig& cfg, std::string_view assignment);

}  // namespace fgsty

#endif  // FGSTY_CONFIG_HPP_
