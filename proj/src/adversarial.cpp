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

#include "fgsty/adversarial.hpp"

#include <algorithm>
#include <cmath>

namespace fgsty {

double grl_lambda_at(const ExperimentConfig& cfg, double progress) {
  if (cfg.grl_schedule == "constant") return cfg.grl_lambda;
  if (cfg.grl_schedule == "ramp") {
    const double p = std::clamp(progress, 0.0, 1.0);
    return cfg.grl_lambda * (2.0 / (1.0 + std::exp(-10.0 * p)) - 1.0);
  }
  throw Error("unknown grl_schedule '" + cfg.grl_schedule + "'");
}

namespace {

// Builds the hook that trains `d` on the features of a combined batch and
// hands back the reversed, weighted domain gradient.
FeatureHook make_hook(PixelDiscriminator<float>& d, OptimState& opt_d,
                      const ExperimentConfig& cfg, const double& lambda,
                      double& loss_sum, double& acc_sum) {
  return [&d, &opt_d, &cfg, &lambda, &loss_sum, &acc_sum](
             const Tensor<float>& features,
             int n_labeled) -> std::optional<Tensor<float>> {
    std::vector<int> labels(static_cast<std::size_t>(features.batch), 1);
    std::fill(labels.begin(), labels.begin() + n_labeled, 0);
    DomainLoss<float> dl = domain_loss_and_grad(d, grl_forward(features), labels);
    loss_sum += dl.loss;
    acc_sum += dl.accuracy;
    nn::adam_update<float>(d.params(), d.grads(), opt_d);
    for (float& v : dl.dfeatures.data) v *= static_cast<float>(cfg.loss_weights.adv);
    return grl_backward(dl.dfeatures, lambda);
  };
}

}  // namespace

AdvEpochStats adv_train_epoch(AdvParts& parts,
                              std::span<const LabeledPair> m_labeled,
                              std::span<const LabeledPair> r_labeled,
                              const TargetSampler& targets,
                              PseudoLabelMode mode, const ExperimentConfig& cfg,
                              Rng& rng, double progress_begin,
                              double progress_end) {
  if (parts.m == nullptr || parts.opt_m == nullptr || parts.dm == nullptr ||
      parts.opt_dm == nullptr) {
    throw Error("adv_train_epoch: M and its discriminator are required");
  }
  const bool step_r = parts.train_r && parts.r != nullptr;
  if (step_r && (parts.opt_r == nullptr || parts.dr == nullptr ||
                 parts.opt_dr == nullptr || r_labeled.empty())) {
    throw Error("adv_train_epoch: training R needs its optimizer, discriminator and data");
  }
  if (m_labeled.empty()) throw Error("adv_train_epoch: no labeled data");

  // Same draw order as pseudo_label_epoch so that lambda = 0 with a frozen R
  // follows its trajectory exactly.
  std::vector<std::size_t> order(m_labeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::size_t> r_order(r_labeled.size());
  for (std::size_t i = 0; i < r_order.size(); ++i) r_order[i] = i;
  Rng r_rng = rng.substream("adv-r-order");
  r_rng.shuffle(r_order);

  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps = (order.size() + bs - 1) / bs;
  AdvEpochStats st;
  double lambda = 0.0;
  const FeatureHook hook_m =
      make_hook(*parts.dm, *parts.opt_dm, cfg, lambda, st.dm_loss, st.dm_accuracy);
  FeatureHook hook_r;
  if (step_r) {
    hook_r = make_hook(*parts.dr, *parts.opt_dr, cfg, lambda, st.dr_loss, st.dr_accuracy);
  }

  int cpl_steps = 0;
  std::vector<LabeledPair> batch, r_batch;
  std::vector<const Image*> tbatch;
  std::size_t r_pos = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double p = progress_begin + (progress_end - progress_begin) *
                                          static_cast<double>(s) / steps;
    lambda = grl_lambda_at(cfg, p);
    batch.clear();
    tbatch.clear();
    const std::size_t start = s * bs, end = std::min(order.size(), start + bs);
    for (std::size_t i = start; i < end; ++i) batch.push_back(m_labeled[order[i]]);
    for (std::size_t i = 0; i < bs; ++i) tbatch.push_back(targets.draw(rng));

    const StepStats ms = pseudo_label_step(*parts.m, parts.r, batch, tbatch, mode,
                                           cfg, *parts.opt_m, &hook_m);
    st.m.seg_loss += ms.seg_loss;
    if (ms.n_accepted > 0 && mode != PseudoLabelMode::kNone) {
      st.m.cpl_loss += ms.cpl_loss;
      ++cpl_steps;
    }
    st.m.n_accepted += ms.n_accepted;
    st.m.n_rejected += ms.n_rejected;
    ++st.m.steps;

    if (step_r) {
      r_batch.clear();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        r_batch.push_back(r_labeled[r_order[r_pos]]);
        r_pos = (r_pos + 1) % r_order.size();
      }
      const StepStats rs = pseudo_label_step(*parts.r, nullptr, r_batch, tbatch,
                                             PseudoLabelMode::kNone, cfg,
                                             *parts.opt_r, &hook_r);
      st.r_seg_loss += rs.seg_loss;
    }
  }
  const double n = static_cast<double>(steps);
  st.m.seg_loss /= n;
  if (cpl_steps > 0) st.m.cpl_loss /= cpl_steps;
  st.dm_loss /= n;
  st.dm_accuracy /= n;
  if (step_r) {
    st.r_seg_loss /= n;
    st.dr_loss /= n;
    st.dr_accuracy /= n;
  }
  st.lambda = lambda;
  return st;
}

}  // namespace fgsty
