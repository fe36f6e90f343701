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

#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fgsty/synthdata.hpp"

namespace fgsty {
namespace {

DomainRecipe small_recipe(const std::string& id) {
  DomainRecipe r;
  r.domain_id = id;
  r.resolution = 32;
  return r;
}

double fg_fraction(const Sample& s) {
  return static_cast<double>(s.mask->count()) / static_cast<double>(s.mask->pixel_count());
}

// Mean hue of foreground pixels, each pixel converted on its own.
double mean_fg_hue(const DatasetSplit& split) {
  double sum = 0.0;
  long n = 0;
  for (const auto& s : split.train) {
    for (int y = 0; y < s.image.height; ++y) {
      for (int x = 0; x < s.image.width; ++x) {
        if (!s.mask->at(y, x)) continue;
        sum += rgb_hue({s.image.at(y, x, 0), s.image.at(y, x, 1), s.image.at(y, x, 2)});
        ++n;
      }
    }
  }
  return sum / static_cast<double>(n);
}

TEST(Generate, SameSeedIsBitIdentical) {
  const DomainRecipe r = small_recipe("A");
  const DatasetSplit a = generate_domain(r, 6, 3, 11);
  const DatasetSplit b = generate_domain(r, 6, 3, 11);
  ASSERT_EQ(a.train.size(), 6u);
  ASSERT_EQ(a.test.size(), 3u);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].image, b.train[i].image);
    EXPECT_EQ(*a.train[i].mask, *b.train[i].mask);
    EXPECT_EQ(a.train[i].sample_id, b.train[i].sample_id);
  }
  EXPECT_EQ(a.train[0].sample_id, "A-train-0000");
  EXPECT_EQ(a.test[2].sample_id, "A-test-0002");
  const DatasetSplit c = generate_domain(r, 6, 3, 12);
  EXPECT_NE(a.train[0].image, c.train[0].image);
}

TEST(Generate, ForegroundFractionWithinRange) {
  const DomainRecipe r = small_recipe("A");
  const DatasetSplit d = generate_domain(r, 40, 10, 3);
  for (const auto* part : {&d.train, &d.test}) {
    for (const auto& s : *part) {
      ASSERT_TRUE(s.labeled());
      const double f = fg_fraction(s);
      EXPECT_GE(f, r.fg_area_range.first) << s.sample_id;
      EXPECT_LE(f, r.fg_area_range.second) << s.sample_id;
      EXPECT_TRUE(s.image.valid());
    }
  }
}

TEST(Generate, HueGapIsMeasurable) {
  DomainRecipe a = small_recipe("A");
  DomainRecipe b = small_recipe("B");
  a.fg_hue = 0.10;
  b.fg_hue = 0.40;
  const double ha = mean_fg_hue(generate_domain(a, 100, 1, 5));
  const double hb = mean_fg_hue(generate_domain(b, 100, 1, 5));
  EXPECT_NEAR(hb - ha, 0.3, 0.05);
}

TEST(Generate, BackgroundChangeLeavesForegroundPixels) {
  DomainRecipe a = small_recipe("A");
  DomainRecipe b = a;
  b.bg_palette = {{0.9, 0.1, 0.1}, {0.1, 0.9, 0.1}, {0.1, 0.1, 0.9}};
  b.bg_pattern = BgPattern::kBlobs;
  b.bg_texture_noise = 0.1;
  const DatasetSplit da = generate_domain(a, 8, 1, 21);
  const DatasetSplit db = generate_domain(b, 8, 1, 21);
  long fg = 0, bg_changed = 0;
  for (std::size_t i = 0; i < da.train.size(); ++i) {
    const Sample& sa = da.train[i];
    const Sample& sb = db.train[i];
    ASSERT_EQ(*sa.mask, *sb.mask);
    for (int y = 0; y < sa.image.height; ++y) {
      for (int x = 0; x < sa.image.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          if (sa.mask->at(y, x)) {
            EXPECT_EQ(sa.image.at(y, x, c), sb.image.at(y, x, c));
            ++fg;
          } else if (sa.image.at(y, x, c) != sb.image.at(y, x, c)) {
            ++bg_changed;
          }
        }
      }
    }
  }
  EXPECT_GT(fg, 0);
  EXPECT_GT(bg_changed, 0);
}

TEST(Generate, InfeasibleRecipeThrows) {
  DomainRecipe r = small_recipe("A");
  r.resolution = 8;
  r.fg_area_range = {0.10, 0.11};
  EXPECT_THROW(generate_domain(r, 1, 1, 0), Error);
  DomainRecipe z = small_recipe("A");
  EXPECT_THROW(generate_domain(z, 0, 1, 0), Error);
  z.fg_area_range = {0.2, 0.6};
  EXPECT_THROW(generate_domain(z, 1, 1, 0), Error);
}

TEST(Recipe, JsonRoundTrip) {
  const DomainRecipe r = preset_recipes(32)[4];
  const DomainRecipe back = nlohmann::json(r).get<DomainRecipe>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(r));
}

TEST(Preset, SharedResolutionAndAreaRange) {
  const PresetSuite suite = preset_suite(1, 4, 2, 32);
  ASSERT_EQ(suite.targets.size(), 4u);
  ASSERT_EQ(suite.target_recipes.size(), 4u);
  for (const auto& r : suite.target_recipes) {
    EXPECT_EQ(r.resolution, suite.source_recipe.resolution);
    EXPECT_EQ(r.fg_area_range, suite.source_recipe.fg_area_range);
  }
  const std::vector<std::string> ids = {"T1", "T2", "T3", "T4"};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    EXPECT_EQ(suite.targets[i].domain_id, ids[i]);
    EXPECT_EQ(suite.targets[i].train[0].image.height, 32);
  }
}

TEST(Preset, DisplacedDomainMovesCentroid) {
  const PresetSuite suite = preset_suite(2, 96, 1, 64);
  const auto cs = label_distribution_summary(suite.source).centroid();
  const auto c4 = label_distribution_summary(suite.targets[3]).centroid();
  const double shift = std::hypot(cs[0] - c4[0], cs[1] - c4[1]);
  EXPECT_GT(shift, 0.10 * 64);
  // Domains without a position shift stay close to the source.
  const auto c1 = label_distribution_summary(suite.targets[0]).centroid();
  EXPECT_LT(std::hypot(cs[0] - c1[0], cs[1] - c1[1]), 0.05 * 64);
}

Sample mask_sample(const BinaryMask& m) {
  Sample s;
  s.image = Image(m.height, m.width);
  s.mask = m;
  s.sample_id = "x";
  return s;
}

TEST(LabelSummary, IdenticalMasksGiveThatMask) {
  BinaryMask m(4, 6);
  m.set(1, 2, true);
  m.set(2, 2, true);
  m.set(3, 5, true);
  const LabelDistribution d =
      label_distribution_summary(std::vector<Sample>{mask_sample(m), mask_sample(m), mask_sample(m)});
  ASSERT_EQ(d.mean_mask.size(), m.pixel_count());
  for (std::size_t i = 0; i < m.pixel_count(); ++i) {
    EXPECT_DOUBLE_EQ(d.mean_mask[i], m.data[i] ? 1.0 : 0.0);
  }
}

TEST(LabelSummary, MarginalsSumToOne) {
  const DatasetSplit d = generate_domain(small_recipe("A"), 10, 1, 4);
  const LabelDistribution s = label_distribution_summary(d);
  double sx = 0.0, sy = 0.0;
  for (double v : s.marginal_x) sx += v;
  for (double v : s.marginal_y) sy += v;
  EXPECT_NEAR(sx, 1.0, 1e-9);
  EXPECT_NEAR(sy, 1.0, 1e-9);
  EXPECT_EQ(s.marginal_x.size(), 32u);
}

TEST(LabelSummary, DisjointHalvesAverageToOneHalf) {
  // Left half in one mask, right half in the other: every pixel is covered
  // once in two masks, so the mean is 1/2 everywhere and marginal_x is flat.
  BinaryMask left(4, 4), right(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) (x < 2 ? left : right).set(y, x, true);
  }
  const LabelDistribution d =
      label_distribution_summary(std::vector<Sample>{mask_sample(left), mask_sample(right)});
  for (double v : d.mean_mask) EXPECT_DOUBLE_EQ(v, 0.5);
  for (double v : d.marginal_x) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(LabelSummary, UnlabeledSampleIsAnError) {
  Sample s;
  s.image = Image(4, 4);
  s.sample_id = "u";
  EXPECT_THROW(label_distribution_summary(std::vector<Sample>{s}), Error);
  EXPECT_THROW(label_distribution_summary(std::vector<Sample>{}), Error);
}

TEST(Color, HueOfPrimaries) {
  EXPECT_NEAR(rgb_hue({1.0, 0.0, 0.0}), 0.0, 1e-12);
  EXPECT_NEAR(rgb_hue({0.0, 1.0, 0.0}), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(rgb_hue({0.0, 0.0, 1.0}), 2.0 / 3.0, 1e-12);
  const Color c = hsv_to_rgb(0.3, 0.5, 0.8);
  EXPECT_NEAR(rgb_hue(c), 0.3, 1e-12);
}

}  // namespace
}  // namespace fgsty
