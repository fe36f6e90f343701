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


#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fgsty/adversarial.hpp"
#include "fgsty/cpl.hpp"

namespace fgsty {
namespace {

template <typename T>
Tensor<T> random_tensor(int c, int n, int h, int w, Rng& rng) {
  Tensor<T> t(c, n, h, w);
  for (T& v : t.data) v = static_cast<T>(rng.normal());
  return t;
}

TEST(Grl, ForwardIsBitwiseIdentity) {
  Rng rng(1);
  const Tensor<float> x = random_tensor<float>(3, 2, 5, 7, rng);
  const Tensor<float> y = grl_forward(grl_forward(x));
  EXPECT_TRUE(y.same_shape(x));
  EXPECT_EQ(y.data, x.data);
}

TEST(Grl, BackwardScalesAndNegates) {
  Tensor<float> up(2, 1, 3, 3);
  std::fill(up.data.begin(), up.data.end(), 1.0f);
  const Tensor<float> g = grl_backward(up, 0.1);
  for (float v : g.data) EXPECT_FLOAT_EQ(v, -0.1f);
  for (float v : grl_backward(up, 0.0).data) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(grl_backward(up, -0.5), Error);
}

TEST(Grl, LambdaSchedules) {
  ExperimentConfig cfg;
  cfg.grl_lambda = 0.3;
  EXPECT_EQ(grl_lambda_at(cfg, 0.0), 0.3);
  EXPECT_EQ(grl_lambda_at(cfg, 0.7), 0.3);
  cfg.grl_schedule = "ramp";
  EXPECT_EQ(grl_lambda_at(cfg, 0.0), 0.0);
  EXPECT_NEAR(grl_lambda_at(cfg, 1.0), 0.3 * (2.0 / (1.0 + std::exp(-10.0)) - 1.0), 1e-15);
  EXPECT_LT(grl_lambda_at(cfg, 0.2), grl_lambda_at(cfg, 0.5));
}

// The reversed domain gradient reaching the feature extractor must equal
// -lambda times the finite-difference gradient of the domain loss.
TEST(Grl, ComposedPathMatchesFiniteDifferences) {
  const double lambda = 0.7;
  Rng rng(2);
  UNet<double> net(UNetSpec{{3, 4}, 3, 0.1});
  net.init(rng);
  for (double& p : net.params()) p += 0.05 * rng.normal();
  PixelDiscriminator<double> d(3, 4);
  d.init(rng);
  for (double& p : d.params()) p += 0.05 * rng.normal();
  const Tensor<double> x = random_tensor<double>(3, 2, 8, 8, rng);
  const int labels[] = {0, 1};

  auto domain_loss = [&] {
    net.forward(x);
    return domain_loss_and_grad(d, grl_forward(net.features()), labels).loss;
  };

  const Tensor<double> logits = net.forward(x);
  const DomainLoss<double> dl = domain_loss_and_grad(d, grl_forward(net.features()), labels);
  const Tensor<double> dfeat = grl_backward(dl.dfeatures, lambda);
  net.zero_grad();
  net.backward(Tensor<double>(logits.channels, logits.batch, logits.height, logits.width),
               &dfeat);
  const std::vector<double> analytic = net.grads();

  // Only encoder/decoder parameters feed the features; skip the head.
  const std::size_t n = net.param_count() - 4;
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < 100; ++k) {
    const std::size_t i = (k * 7919) % n;
    const double orig = net.params()[i];
    net.params()[i] = orig + h;
    const double lp = domain_loss();
    net.params()[i] = orig - h;
    const double lm = domain_loss();
    net.params()[i] = orig;
    const double expect = -lambda * (lp - lm) / (2 * h);
    const double denom = std::max({std::abs(expect), std::abs(analytic[i]), 1e-7});
    worst = std::max(worst, std::abs(expect - analytic[i]) / denom);
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Discriminator, DiscriminatorGradientMatchesFiniteDifferences) {
  Rng rng(3);
  PixelDiscriminator<double> d(4, 5);
  d.init(rng);
  const Tensor<double> f = random_tensor<double>(4, 2, 4, 4, rng);
  const int labels[] = {1, 0};
  const DomainLoss<double> dl = domain_loss_and_grad(d, f, labels);
  const std::vector<double> analytic = d.grads();
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < d.params().size(); i += 3) {
    const double orig = d.params()[i];
    d.params()[i] = orig + h;
    const double lp = domain_loss_and_grad(d, f, labels).loss;
    d.params()[i] = orig - h;
    const double lm = domain_loss_and_grad(d, f, labels).loss;
    d.params()[i] = orig;
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic[i]) /
                                std::max({std::abs(fd), std::abs(analytic[i]), 1e-7}));
  }
  EXPECT_LT(worst, 1e-3);
  EXPECT_TRUE(dl.dfeatures.same_shape(f));
  const int wrong[] = {1};
  EXPECT_THROW(domain_loss_and_grad(d, f, wrong), DimensionMismatch);
}

TEST(Discriminator, SeparatesConstantDomains) {
  Rng rng(4);
  PixelDiscriminator<float> d(4, 8);
  d.init(rng);
  OptimState opt(d.params().size(), 1e-2);
  Tensor<float> f(4, 4, 6, 6);
  const int labels[] = {0, 1, 0, 1};
  const std::size_t plane = f.plane();
  for (int c = 0; c < 4; ++c) {
    for (int n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < plane; ++i) {
        f.row(c)[n * plane + i] = labels[n] ? 0.8f : 0.2f;
      }
    }
  }
  double acc = 0.0;
  int step = 0;
  for (; step < 100 && acc <= 0.95; ++step) {
    acc = domain_loss_and_grad(d, f, labels).accuracy;
    nn::adam_update<float>(d.params(), d.grads(), opt);
  }
  EXPECT_GT(acc, 0.95) << "after " << step << " steps";
}

struct AdvFixture : ::testing::Test {
  UNetSpec spec{{4, 8}, 3, 0.1};
  DatasetSplit ss;
  std::vector<Sample> targets;
  ExperimentConfig cfg;

  void SetUp() override {
    Rng rng(5);
    for (int i = 0; i < 12; ++i) {
      Sample s;
      s.image = Image(16, 16);
      for (float& v : s.image.data) v = static_cast<float>(rng.uniform());
      s.mask = BinaryMask(16, 16);
      for (auto& v : s.mask->data) v = rng.uniform() < 0.3;
      ss.train.push_back(s);
      Sample t;
      t.image = Image(16, 16);
      for (float& v : t.image.data) v = static_cast<float>(rng.uniform(0.2, 0.9));
      targets.push_back(t);
    }
    cfg.batch_size = 4;
    cfg.alpha = 0.3;
    cfg.grl_lambda = 0.0;
  }
};

TEST_F(AdvFixture, ZeroLambdaFollowsCplTrajectory) {
  SegModel m1(spec, 1), m2(spec, 1);
  const SegModel r_frozen(spec, 2);
  SegModel r(spec, 2);
  OptimState o1 = make_optimizer(m1, 1e-3), o2 = make_optimizer(m2, 1e-3);
  PixelDiscriminator<float> dm(spec.widths[0], 8);
  Rng init(3);
  dm.init(init);
  OptimState odm(dm.params().size(), 1e-3);

  std::vector<LabeledPair> labeled;
  for (const auto& s : ss.train) labeled.emplace_back(&s.image, &*s.mask);
  std::vector<const Image*> t;
  for (const auto& s : targets) t.push_back(&s.image);
  const TargetSampler sampler({t});

  int accepted_a = 0, accepted_b = 0;
  for (int e = 0; e < 2; ++e) {
    Rng ra = Rng(10).substream(e), rb = Rng(10).substream(e);
    accepted_a += cpl_train_epoch(m1, r_frozen, ss, targets, cfg, o1, ra).n_accepted;
    AdvParts parts;
    parts.m = &m2;
    parts.opt_m = &o2;
    parts.dm = &dm;
    parts.opt_dm = &odm;
    parts.r = &r;
    parts.train_r = false;
    const AdvEpochStats st = adv_train_epoch(parts, labeled, {}, sampler,
                                             PseudoLabelMode::kConsensus, cfg, rb, 0.0, 1.0);
    accepted_b += st.m.n_accepted;
    EXPECT_GT(st.dm_loss, 0.0);
  }
  EXPECT_EQ(accepted_a, accepted_b);
  EXPECT_EQ(m1.params(), m2.params());
  EXPECT_EQ(r.params(), r_frozen.params());
}

TEST_F(AdvFixture, PositiveLambdaChangesTrajectory) {
  SegModel m1(spec, 1), m2(spec, 1);
  OptimState o1 = make_optimizer(m1, 1e-3), o2 = make_optimizer(m2, 1e-3);
  PixelDiscriminator<float> d1(spec.widths[0], 8), d2(spec.widths[0], 8);
  Rng i1(3), i2(3);
  d1.init(i1);
  d2.init(i2);
  OptimState od1(d1.params().size(), 1e-3), od2(d2.params().size(), 1e-3);
  std::vector<LabeledPair> labeled;
  for (const auto& s : ss.train) labeled.emplace_back(&s.image, &*s.mask);
  std::vector<const Image*> t;
  for (const auto& s : targets) t.push_back(&s.image);
  const TargetSampler sampler({t});
  AdvParts a{&m1, &o1, &d1, &od1, nullptr, nullptr, nullptr, nullptr, false};
  AdvParts b{&m2, &o2, &d2, &od2, nullptr, nullptr, nullptr, nullptr, false};
  ExperimentConfig on = cfg;
  on.grl_lambda = 0.5;
  Rng ra(11), rb(11);
  adv_train_epoch(a, labeled, {}, sampler, PseudoLabelMode::kNone, cfg, ra, 0.0, 1.0);
  adv_train_epoch(b, labeled, {}, sampler, PseudoLabelMode::kNone, on, rb, 0.0, 1.0);
  EXPECT_NE(m1.params(), m2.params());
}

TEST_F(AdvFixture, TrainingRRequiresItsParts) {
  SegModel m(spec, 1), r(spec, 2);
  OptimState om = make_optimizer(m, 1e-3);
  PixelDiscriminator<float> dm(spec.widths[0], 8);
  OptimState odm(dm.params().size(), 1e-3);
  std::vector<LabeledPair> labeled;
  for (const auto& s : ss.train) labeled.emplace_back(&s.image, &*s.mask);
  std::vector<const Image*> t;
  for (const auto& s : targets) t.push_back(&s.image);
  const TargetSampler sampler({t});
  AdvParts parts{&m, &om, &dm, &odm, &r, nullptr, nullptr, nullptr, true};
  Rng rng(1);
  EXPECT_THROW(adv_train_epoch(parts, labeled, labeled, sampler, PseudoLabelMode::kConsensus,
                               cfg, rng, 0.0, 1.0),
               Error);
}

}  // namespace
}  // namespace fgsty
