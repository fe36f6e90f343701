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

#ifndef FGSTY_SYNTHDATA_HPP_
#define FGSTY_SYNTHDATA_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fgsty/core.hpp"

namespace fgsty {

using Range = std::pair<double, double>;
using Color = std::array<double, 3>;

enum class BgPattern { kGradient, kChecker, kBlobs };

/// Parameters of one synthetic "hand scene" domain.
struct DomainRecipe {
  std::string domain_id = "synthetic";
  // Foreground ("hand") appearance in HSV.
  double fg_hue = 0.06;
  Range fg_saturation = {0.45, 0.6};
  Range fg_value = {0.75, 0.9};
  double fg_texture_noise = 0.03;
  // Background: 2-4 base colors arranged by a procedural pattern.
  std::vector<Color> bg_palette = {{0.2, 0.3, 0.5}, {0.3, 0.5, 0.35}};
  BgPattern bg_pattern = BgPattern::kChecker;
  double bg_texture_noise = 0.03;
  // Multiplies every pixel before clipping.
  double lighting_gain = 1.0;
  // Where hands center, in fractions of (width, height).
  std::array<double, 2> label_position_mean = {0.5, 0.7};
  std::array<double, 4> label_position_cov = {0.01, 0.0, 0.0, 0.005};
  // Foreground pixel fraction per image.
  Range fg_area_range = {0.08, 0.25};
  // Ellipses per hand and hands per image.
  std::pair<int, int> n_blobs_range = {2, 4};
  std::pair<int, int> n_hands_range = {1, 2};
  int resolution = 64;

  /// Throws fgsty::Error when a range is degenerate or out of bounds.
  void validate() const;
};

void to_json(nlohmann::json& j, const DomainRecipe& r);
void from_json(const nlohmann::json& j, DomainRecipe& r);

/// Renders n_train + n_test samples. Sample ids are
/// "<domain>-train-0000" / "<domain>-test-0000". Deterministic in seed;
/// each sample draws from its own substream, with separate streams for
/// shape, foreground and background.
DatasetSplit generate_domain(const DomainRecipe& recipe, int n_train,
                             int n_test, std::uint64_t seed);

struct PresetSuite {
  DatasetSplit source;
  std::vector<DatasetSplit> targets;  // T1..T4
  DomainRecipe source_recipe;
  std::vector<DomainRecipe> target_recipes;
};

/// Recipes of the preset: source "S" plus targets with graded shifts
///   T1 mild color shift, T2 lighting shift, T3 strong hue and texture
///   shift, T4 strong shift with displaced hand positions.
std::vector<DomainRecipe> preset_recipes(int resolution = 64);

PresetSuite preset_suite(std::uint64_t seed, int n_train = 96, int n_test = 48,
                         int resolution = 64);

struct LabelDistribution {
  int height = 0;
  int width = 0;
  std::vector<double> mean_mask;  // row-major
  std::vector<double> marginal_x;  // sums to 1 (all zeros if no foreground)
  std::vector<double> marginal_y;

  /// Foreground centroid in pixels (x, y) of the mean mask.
  std::array<double, 2> centroid() const;
};

/// Averages masks of the given samples (all must be labeled).
LabelDistribution label_distribution_summary(const std::vector<Sample>& samples);
inline LabelDistribution label_distribution_summary(const DatasetSplit& split) {
  return label_distribution_summary(split.train);
}

/// Hue in [0,1) of an RGB color.
double rgb_hue(const Color& rgb);
Color hsv_to_rgb(double h, double s, double v);

}  // namespace fgsty

#endif  // FGSTY_SYNTHDATA_HPP_
