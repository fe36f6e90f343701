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


#include <cstdint>
#include <filesystem>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "fgsty/config.hpp"
#include "fgsty/core.hpp"
#include "fgsty/dataset.hpp"
#include "fgsty/rng.hpp"

namespace fs = std::filesystem;

namespace fgsty {
namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() /
               ("fgsty_core_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Golden draws for seed 42; regenerate with tests/oracles/rng_oracle.py.
TEST(Rng, GoldenSeed42) {
  const std::uint64_t golden[10] = {
      0x57E1FABA65107204ULL, 0xF4ABD143FEB24055ULL, 0x7C816738C12903B2ULL,
      0x113E5DEC6F8FD8A8ULL, 0xAD4A599062FD1739ULL, 0x11485B98A7EA20B7ULL,
      0x32028F50341EBD74ULL, 0xBC16A3D4CC48678EULL, 0x1C839D924AAE6DFFULL,
      0xB7ABB011B5A21848ULL};
  Rng r(42);
  for (std::uint64_t g : golden) EXPECT_EQ(r.next_u64(), g);

  Rng u(42);
  EXPECT_DOUBLE_EQ(u.uniform(), 0.34329192209867343);
  EXPECT_DOUBLE_EQ(u.uniform(), 0.9557467261317436);
  EXPECT_DOUBLE_EQ(u.uniform(), 0.48634953628166855);

  EXPECT_EQ(Rng(42).substream("a").next_u64(), 0x0223E10769504B1DULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(0), b(0);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(Rng(0).next_u64(), Rng(1).next_u64());
}

TEST(Rng, SubstreamDoesNotAdvanceParent) {
  Rng a(7), b(7);
  (void)a.substream("x");
  (void)a.substream(3);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(Rng(7).substream(1).next_u64(), Rng(7).substream(2).next_u64());
}

TEST(Rng, IndexIsInRangeAndRoughlyUniform) {
  Rng r(5);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) {
    const auto k = r.index(6);
    ASSERT_LT(k, 6u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
  EXPECT_THROW(r.index(0), Error);
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Core, ThresholdIsStrict) {
  ProbMap p(1, 3);
  p.data = {0.5f, 0.50001f, 0.2f};
  const BinaryMask m = threshold_map(p, 0.5);
  EXPECT_FALSE(m.at(0, 0));
  EXPECT_TRUE(m.at(0, 1));
  EXPECT_FALSE(m.at(0, 2));
}

TEST(Core, IntersectAndSizeCheck) {
  BinaryMask a(2, 2), b(2, 2);
  a.set(0, 0, true);
  a.set(1, 1, true);
  b.set(1, 1, true);
  const BinaryMask c = intersect(a, b);
  EXPECT_EQ(c.count(), 1u);
  EXPECT_TRUE(c.at(1, 1));
  EXPECT_THROW(intersect(a, BinaryMask(2, 3)), DimensionMismatch);
}

TEST(Core, DisjointSplitsAreEnforced) {
  DatasetSplit s;
  s.train.push_back({Image(2, 2), BinaryMask(2, 2), "d", "x"});
  s.test.push_back({Image(2, 2), BinaryMask(2, 2), "d", "y"});
  EXPECT_NO_THROW(check_disjoint(s));
  s.test.push_back({Image(2, 2), BinaryMask(2, 2), "d", "x"});
  EXPECT_THROW(check_disjoint(s), Error);
}

TEST(Dataset, MaskBinarizationRule) {
  EXPECT_FALSE(binarize_mask_value(0));
  EXPECT_FALSE(binarize_mask_value(127));
  EXPECT_TRUE(binarize_mask_value(128));
  EXPECT_TRUE(binarize_mask_value(255));
}

TEST(Dataset, RoundTripThreeLabeledPairs) {
  const fs::path root = scratch("roundtrip");
  DatasetSplit split;
  split.domain_id = "d";
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.image = Image(8, 8, 0.25f * static_cast<float>(i + 1));
    s.mask = BinaryMask(8, 8);
    s.mask->set(i, i, true);
    s.sample_id = "img" + std::to_string(i);
    s.domain_id = "d";
    split.train.push_back(s);
  }
  save_dataset(split, root);
  const DatasetSplit back = load_dataset(root, {8});
  ASSERT_EQ(back.train.size(), 3u);
  EXPECT_TRUE(back.test.empty());
  for (int i = 0; i < 3; ++i) {
    ASSERT_TRUE(back.train[i].labeled());
    EXPECT_EQ(*back.train[i].mask, *split.train[i].mask);
    EXPECT_NEAR(back.train[i].image.at(3, 3, 1), 0.25f * (i + 1), 1.0 / 255.0);
  }
  fs::remove_all(root);
}

TEST(Dataset, Mask127And128) {
  const fs::path root = scratch("binarize");
  fs::create_directories(root / "train" / "images");
  fs::create_directories(root / "train" / "masks");
  cv::imwrite((root / "train" / "images" / "a.png").string(),
              cv::Mat(4, 4, CV_8UC3, cv::Scalar(10, 20, 30)));
  cv::Mat mask(4, 4, CV_8UC1, cv::Scalar(0));
  mask.at<unsigned char>(0, 0) = 127;
  mask.at<unsigned char>(0, 1) = 128;
  cv::imwrite((root / "train" / "masks" / "a.png").string(), mask);
  const DatasetSplit s = load_dataset(root, {0});
  ASSERT_EQ(s.train.size(), 1u);
  const BinaryMask& m = *s.train[0].mask;
  EXPECT_FALSE(m.at(0, 0));
  EXPECT_TRUE(m.at(0, 1));
  EXPECT_EQ(m.count(), 1u);
  fs::remove_all(root);
}

TEST(Dataset, AllZeroMaskIsBackground) {
  const fs::path root = scratch("zeros");
  fs::create_directories(root / "train" / "images");
  fs::create_directories(root / "train" / "masks");
  cv::imwrite((root / "train" / "images" / "a.png").string(),
              cv::Mat(8, 8, CV_8UC3, cv::Scalar(0, 0, 0)));
  cv::imwrite((root / "train" / "masks" / "a.png").string(),
              cv::Mat(8, 8, CV_8UC1, cv::Scalar(0)));
  const DatasetSplit s = load_dataset(root, {8});
  EXPECT_EQ(s.train.at(0).mask->count(), 0u);
  fs::remove_all(root);
}

TEST(Dataset, MissingMaskIsAnError) {
  const fs::path root = scratch("missing");
  fs::create_directories(root / "train" / "images");
  fs::create_directories(root / "train" / "masks");
  cv::imwrite((root / "train" / "images" / "a.png").string(),
              cv::Mat(8, 8, CV_8UC3, cv::Scalar(0, 0, 0)));
  EXPECT_THROW(load_dataset(root, {8}), Error);
  fs::remove_all(root);
}

TEST(Dataset, UnlabeledSplitWithoutMaskDirectory) {
  const fs::path root = scratch("unlabeled");
  fs::create_directories(root / "test" / "images");
  cv::imwrite((root / "test" / "images" / "a.png").string(),
              cv::Mat(8, 8, CV_8UC3, cv::Scalar(0, 0, 0)));
  const DatasetSplit s = load_dataset(root, {8});
  ASSERT_EQ(s.test.size(), 1u);
  EXPECT_FALSE(s.test[0].labeled());
  fs::remove_all(root);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c;
  c.alpha = 0.65;
  c.model_widths = {4, 8};
  c.loss_weights.adv = 0.3;
  c.seed = 123456789012345ULL;
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<ExperimentConfig>(), c);
}

TEST(Config, FileRoundTrip) {
  const fs::path root = scratch("config");
  ExperimentConfig c;
  c.grl_schedule = "ramp";
  save_config(c, root / "c.json");
  EXPECT_EQ(load_config(root / "c.json"), c);
  fs::remove_all(root);
}

TEST(Config, UnknownFieldRejected) {
  nlohmann::json j = ExperimentConfig{};
  j["alhpa"] = 0.5;
  EXPECT_THROW(j.get<ExperimentConfig>(), Error);
}

TEST(Config, Overrides) {
  ExperimentConfig c;
  apply_override(c, "alpha=0.9");
  apply_override(c, "loss_weights.cpl=0.5");
  apply_override(c, "grl_schedule=ramp");
  apply_override(c, "model_widths=[4,8,16]");
  EXPECT_DOUBLE_EQ(c.alpha, 0.9);
  EXPECT_DOUBLE_EQ(c.loss_weights.cpl, 0.5);
  EXPECT_EQ(c.grl_schedule, "ramp");
  EXPECT_EQ(c.model_widths, (std::vector<int>{4, 8, 16}));
  EXPECT_THROW(apply_override(c, "nope=1"), Error);
  EXPECT_THROW(apply_override(c, "alpha"), Error);
}

TEST(Config, Validation) {
  ExperimentConfig c;
  EXPECT_NO_THROW(c.validate());
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.resolution = 60;  // not a multiple of 8 for four levels
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.grl_schedule = "cosine";
  EXPECT_THROW(c.validate(), Error);
}

TEST(Config, EpochSplit) {
  ExperimentConfig c;
  c.epochs = 12;
  EXPECT_EQ(c.pretrain_epochs(), 6);
  EXPECT_EQ(c.adapt_epochs(), 6);
  c.epochs = 5;
  c.pretrain_fraction = 0.2;
  EXPECT_EQ(c.pretrain_epochs(), 1);
  EXPECT_EQ(c.adapt_epochs(), 4);
}

}  // namespace
}  // namespace fgsty
