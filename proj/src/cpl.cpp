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

#include "fgsty/cpl.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "fgsty/log.hpp"
#include "fgsty/metrics.hpp"

namespace fgsty {

PseudoLabelDecision consensus_label(const ProbMap& m_pred, const ProbMap& r_pred,
                                    double alpha, double threshold) {
  require_same_size(m_pred, r_pred, "consensus_label");
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error("consensus_label: alpha must be in [0,1]");
  }
  PseudoLabelDecision d;
  d.y1 = threshold_map(m_pred, threshold);
  d.y2 = threshold_map(r_pred, threshold);
  d.agreement_miou = miou(d.y1, d.y2).miou;
  d.accepted = d.agreement_miou > alpha;
  if (d.accepted) d.label = intersect(d.y1, d.y2);
  return d;
}

BinaryMask naive_pl(const ProbMap& pred, double t) {
  if (!(t > 0.0 && t < 1.0)) throw Error("naive_pl: t must be in (0,1)");
  return threshold_map(pred, t);
}

TargetSampler::TargetSampler(std::vector<std::vector<const Image*>> domains)
    : domains_(std::move(domains)) {
  if (domains_.empty()) throw Error("TargetSampler: no target domains");
  for (const auto& d : domains_) {
    if (d.empty()) throw Error("TargetSampler: empty target domain");
  }
}

const Image* TargetSampler::draw(Rng& rng, int* domain_index) const {
  const std::size_t d = rng.index(domains_.size());
  if (domain_index != nullptr) *domain_index = static_cast<int>(d);
  return domains_[d][rng.index(domains_[d].size())];
}

std::size_t TargetSampler::total() const {
  std::size_t n = 0;
  for (const auto& d : domains_) n += d.size();
  return n;
}

StepStats pseudo_label_step(SegModel& m, const SegModel* r,
                            std::span<const LabeledPair> labeled,
                            std::span<const Image* const> targets,
                            PseudoLabelMode mode, const ExperimentConfig& cfg,
                            OptimState& opt, const FeatureHook* hook) {
  if (labeled.empty() && targets.empty()) throw Error("pseudo_label_step: empty batch");
  if (mode == PseudoLabelMode::kConsensus && r == nullptr) {
    throw Error("pseudo_label_step: consensus needs a reference model");
  }
  const int n_l = static_cast<int>(labeled.size());
  std::vector<const Image*> images;
  for (const auto& [img, mask] : labeled) images.push_back(img);
  images.insert(images.end(), targets.begin(), targets.end());
  const Tensor<float> logits = forward_batch(m, images);

  StepStats st;
  WeightedBatch wb;
  for (int i = 0; i < n_l; ++i) {
    wb.add(labeled[i].first, *labeled[i].second, cfg.loss_weights.seg / n_l);
    st.seg_loss += bce_loss(logits_to_prob(logits, i), *labeled[i].second) / n_l;
  }

  std::vector<ProbMap> r_probs;
  if (mode == PseudoLabelMode::kConsensus && !targets.empty()) {
    r_probs = r->predict_batch(targets);
  }
  std::vector<ProbMap> t_probs;
  std::vector<std::optional<BinaryMask>> labels;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    t_probs.push_back(logits_to_prob(logits, n_l + static_cast<int>(j)));
    switch (mode) {
      case PseudoLabelMode::kNone:
        labels.emplace_back();
        break;
      case PseudoLabelMode::kNaive:
        labels.emplace_back(naive_pl(t_probs.back(), cfg.pl_threshold));
        break;
      case PseudoLabelMode::kConsensus:
        labels.push_back(consensus_label(t_probs.back(), r_probs[j], cfg.alpha,
                                         cfg.predict_threshold)
                             .label);
        break;
    }
    if (labels.back()) {
      ++st.n_accepted;
    } else if (mode != PseudoLabelMode::kNone) {
      ++st.n_rejected;
    }
  }
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (labels[j]) {
      const double w = cfg.loss_weights.cpl / st.n_accepted;
      st.cpl_loss += bce_loss(t_probs[j], *labels[j]) / st.n_accepted;
      wb.add(targets[j], std::move(*labels[j]), w);
    } else {
      wb.add(targets[j], BinaryMask(logits.height, logits.width), 0.0);
    }
  }

  m.net().zero_grad();
  std::optional<Tensor<float>> extra;
  if (hook != nullptr && *hook) extra = (*hook)(m.net().features(), n_l);
  backward_weighted(m, logits, wb, extra ? &*extra : nullptr);
  for (float g : m.net().grads()) {
    if (!std::isfinite(g)) throw TrainingDiverged("non-finite gradient in adaptation step");
  }
  nn::adam_update<float>(m.params(), m.net().grads(), opt);
  return st;
}

EpochStats pseudo_label_epoch(SegModel& m, const SegModel* r,
                              std::span<const LabeledPair> labeled,
                              const TargetSampler& targets, PseudoLabelMode mode,
                              const ExperimentConfig& cfg, OptimState& opt,
                              Rng& rng, const FeatureHook* hook) {
  if (labeled.empty()) throw Error("pseudo_label_epoch: no labeled data");
  std::vector<std::size_t> order(labeled.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  EpochStats ep;
  int cpl_steps = 0;
  std::vector<LabeledPair> batch;
  std::vector<const Image*> tbatch;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    batch.clear();
    tbatch.clear();
    const std::size_t end = std::min(order.size(), start + bs);
    for (std::size_t i = start; i < end; ++i) batch.push_back(labeled[order[i]]);
    for (std::size_t i = 0; i < bs; ++i) tbatch.push_back(targets.draw(rng));
    const StepStats st = pseudo_label_step(m, r, batch, tbatch, mode, cfg, opt, hook);
    ep.seg_loss += st.seg_loss;
    if (st.n_accepted > 0) {
      ep.cpl_loss += st.cpl_loss;
      ++cpl_steps;
    }
    ep.n_accepted += st.n_accepted;
    ep.n_rejected += st.n_rejected;
    ++ep.steps;
  }
  ep.seg_loss /= ep.steps;
  if (cpl_steps > 0) ep.cpl_loss /= cpl_steps;
  if (mode != PseudoLabelMode::kNone && ep.n_accepted == 0) {
    log_warning("no pseudo-label accepted this epoch; trained on the labeled term only");
  }
  return ep;
}

EpochStats cpl_train_epoch(SegModel& m, const SegModel& r,
                           const DatasetSplit& ss,
                           const std::vector<Sample>& target_unlabeled,
                           const ExperimentConfig& cfg, OptimState& opt,
                           Rng& rng) {
  std::vector<LabeledPair> labeled;
  for (const auto& s : ss.train) {
    if (!s.mask) throw Error("cpl_train_epoch: unlabeled sample " + s.sample_id);
    labeled.emplace_back(&s.image, &*s.mask);
  }
  std::vector<const Image*> t;
  for (const auto& s : target_unlabeled) t.push_back(&s.image);
  return pseudo_label_epoch(m, &r, labeled, TargetSampler({t}),
                            PseudoLabelMode::kConsensus, cfg, opt, rng);
}

std::vector<SweepRow> pseudo_label_sweep(const SegModel& m, const SegModel& r,
                                         const std::vector<Sample>& targets_labeled,
                                         const std::vector<double>& alphas,
                                         double threshold) {
  if (targets_labeled.empty()) throw Error("pseudo_label_sweep: no targets");
  struct Item {
    double agreement;
    double quality;
    double y1_quality;
  };
  std::vector<Item> items;
  for (const auto& s : targets_labeled) {
    if (!s.mask) throw Error("pseudo_label_sweep: sample '" + s.sample_id + "' has no mask");
    const PseudoLabelDecision d =
        consensus_label(m.predict(s.image), r.predict(s.image), 0.0, threshold);
    const BinaryMask label = intersect(d.y1, d.y2);
    items.push_back({d.agreement_miou, miou(label, *s.mask).miou,
                     miou(d.y1, *s.mask).miou});
  }
  std::vector<SweepRow> rows;
  for (double a : alphas) {
    SweepRow row;
    row.alpha = a;
    double q = 0.0, q1 = 0.0;
    for (const auto& it : items) {
      if (it.agreement > a) {
        ++row.n_accepted;
        q += it.quality;
        q1 += it.y1_quality;
      }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.mean_quality = row.n_accepted > 0 ? q / row.n_accepted : nan;
    row.mean_y1_quality = row.n_accepted > 0 ? q1 / row.n_accepted : nan;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "alpha,n_accepted,mean_quality,mean_y1_quality\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.alpha << ',' << r.n_accepted << ',' << r.mean_quality << ','
        << r.mean_y1_quality << '\n';
  }
  if (!out) throw Error("short write on " + path.string());
}

}  // namespace fgsty
