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

#include "fgsty/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>

#include "fgsty/adversarial.hpp"
#include "fgsty/dataset.hpp"
#include "fgsty/log.hpp"
#include "fgsty/metrics.hpp"
#include "fgsty/rng.hpp"
#include "fgsty/stylizer.hpp"

namespace fgsty {
namespace {

struct VariantName {
  Variant v;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {Variant::kSourceOnly, "source_only"}, {Variant::kTargetOnly, "target_only"},
    {Variant::kPl, "pl"},                 {Variant::kFgsty, "fgsty"},
    {Variant::kCpl, "cpl"},               {Variant::kFgstyCpl, "fgsty_cpl"},
    {Variant::kFgstyAdv, "fgsty_adv"},    {Variant::kCplAdv, "cpl_adv"},
    {Variant::kFgstyCplAdv, "fgsty_cpl_adv"}, {Variant::kGray, "gray"},
    {Variant::kHistEq, "hist_eq"},        {Variant::kFdm, "fdm"},
    {Variant::kHistMatch, "hist_match"},  {Variant::kUnaligned, "unaligned"},
};

}  // namespace

Variant parse_variant(const std::string& name) {
  for (const auto& [v, n] : kVariantNames) {
    if (name == n) return v;
  }
  throw Error("unknown variant '" + name + "'");
}

std::string to_string(Variant v) {
  for (const auto& [vv, n] : kVariantNames) {
    if (vv == v) return n;
  }
  return "?";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = [] {
    std::vector<Variant> out;
    for (const auto& [vv, n] : kVariantNames) out.push_back(vv);
    return out;
  }();
  return v;
}

RunMode parse_mode(const std::string& name) {
  if (name == "single_target") return RunMode::kSingleTarget;
  if (name == "multi_target") return RunMode::kMultiTarget;
  if (name == "domain_generalization") return RunMode::kDomainGeneralization;
  throw Error("unknown mode '" + name + "'");
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::kSingleTarget: return "single_target";
    case RunMode::kMultiTarget: return "multi_target";
    case RunMode::kDomainGeneralization: return "domain_generalization";
  }
  return "?";
}

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "alpha") return SweepKind::kAlpha;
  if (name == "n_style") return SweepKind::kNStyle;
  if (name == "source_size") return SweepKind::kSourceSize;
  throw Error("unknown sweep kind '" + name + "' (alpha, n_style, source_size)");
}

std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::kAlpha: return "alpha";
    case SweepKind::kNStyle: return "n_style";
    case SweepKind::kSourceSize: return "source_size";
  }
  return "?";
}

void to_json(nlohmann::json& j, const DatasetRef& r) {
  j = nlohmann::json{{"kind", r.kind}};
  if (r.kind == "preset") j["id"] = r.id;
  if (r.kind == "dir") j["path"] = r.path.string();
  if (r.kind == "recipe") j["recipe"] = *r.recipe;
}

void from_json(const nlohmann::json& j, DatasetRef& r) {
  r = DatasetRef{};
  r.kind = j.at("kind").get<std::string>();
  if (r.kind == "preset") {
    r.id = j.at("id").get<std::string>();
  } else if (r.kind == "dir") {
    r.path = j.at("path").get<std::string>();
  } else if (r.kind == "recipe") {
    r.recipe = j.at("recipe").get<DomainRecipe>();
    r.id = r.recipe->domain_id;
  } else {
    throw Error("unknown dataset kind '" + r.kind + "'");
  }
}

void to_json(nlohmann::json& j, const RunSpec& s) {
  j = nlohmann::json{{"name", s.name},
                     {"variant", to_string(s.variant)},
                     {"source", s.source},
                     {"targets", s.targets},
                     {"mode", to_string(s.mode)},
                     {"config", s.config}};
  j["test_domain"] = s.test_domain ? nlohmann::json(*s.test_domain) : nlohmann::json();
}

void from_json(const nlohmann::json& j, RunSpec& s) {
  s = RunSpec{};
  s.name = j.value("name", "run");
  s.variant = parse_variant(j.at("variant").get<std::string>());
  s.source = j.at("source").get<DatasetRef>();
  s.targets = j.at("targets").get<std::vector<DatasetRef>>();
  s.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("test_domain") && !j.at("test_domain").is_null()) {
    s.test_domain = j.at("test_domain").get<DatasetRef>();
  }
  s.config = j.at("config").get<ExperimentConfig>();
}

void to_json(nlohmann::json& j, const RunResult& r) {
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : r.curves) {
    curves.push_back({{"stage", c.stage},
                      {"epoch", c.epoch},
                      {"seg_loss", c.seg_loss},
                      {"cpl_loss", c.cpl_loss},
                      {"adv_loss", c.adv_loss},
                      {"n_accepted", c.n_accepted},
                      {"n_rejected", c.n_rejected}});
  }
  j = nlohmann::json{{"name", r.name},
                     {"variant", to_string(r.variant)},
                     {"mode", to_string(r.mode)},
                     {"target_order", r.target_order},
                     {"per_target_miou", r.per_target_miou},
                     {"average_miou", r.average_miou},
                     {"curves", curves},
                     {"pseudo_labels", {{"n_accepted", r.n_accepted},
                                        {"n_rejected", r.n_rejected}}},
                     {"spec", r.spec},
                     {"seed", r.seed},
                     {"wall_clock_s", r.wall_clock_s}};
}

void from_json(const nlohmann::json& j, RunResult& r) {
  r = RunResult{};
  r.name = j.at("name").get<std::string>();
  r.variant = parse_variant(j.at("variant").get<std::string>());
  r.mode = parse_mode(j.at("mode").get<std::string>());
  r.target_order = j.at("target_order").get<std::vector<std::string>>();
  r.per_target_miou = j.at("per_target_miou").get<std::map<std::string, double>>();
  r.average_miou = j.at("average_miou").get<double>();
  for (const auto& c : j.at("curves")) {
    CurvePoint cp;
    cp.stage = c.at("stage").get<std::string>();
    cp.epoch = c.at("epoch").get<int>();
    cp.seg_loss = c.at("seg_loss").get<double>();
    cp.cpl_loss = c.at("cpl_loss").get<double>();
    cp.adv_loss = c.at("adv_loss").get<double>();
    cp.n_accepted = c.at("n_accepted").get<int>();
    cp.n_rejected = c.at("n_rejected").get<int>();
    r.curves.push_back(cp);
  }
  r.n_accepted = j.at("pseudo_labels").at("n_accepted").get<int>();
  r.n_rejected = j.at("pseudo_labels").at("n_rejected").get<int>();
  r.spec = j.at("spec").get<RunSpec>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
}

// ---------------------------------------------------------------------------
// Workspace

namespace {

struct Snapshot {
  std::shared_ptr<SegModel> model;
  OptimState opt;
  std::vector<CurvePoint> curves;
};

}  // namespace

struct Workspace::Impl {
  std::map<std::string, DatasetSplit> datasets;
  std::map<std::string, std::map<int, Snapshot>> stages;
  std::map<std::string, StyleAdapted> styled;
  std::map<std::string, DatasetSplit> derived;
  std::map<std::string, std::shared_ptr<const SegModel>> last_models;
};

Workspace::Workspace() : impl_(std::make_unique<Impl>()) {}
Workspace::~Workspace() = default;

void Workspace::clear() { impl_ = std::make_unique<Impl>(); }

namespace {

std::string dataset_key(const DatasetRef& ref, const ExperimentConfig& cfg) {
  const std::string sizes = "/" + std::to_string(cfg.seed) + "/" +
                            std::to_string(cfg.suite_train) + "/" +
                            std::to_string(cfg.suite_test) + "/" +
                            std::to_string(cfg.resolution);
  if (ref.kind == "preset") return "preset:" + ref.id + sizes;
  if (ref.kind == "recipe") {
    if (!ref.recipe) throw Error("dataset ref of kind recipe without a recipe");
    return "recipe:" + nlohmann::json(*ref.recipe).dump() + sizes;
  }
  if (ref.kind == "dir") {
    return "dir:" + std::filesystem::absolute(ref.path).lexically_normal().string() +
           "/" + std::to_string(cfg.resolution);
  }
  throw Error("unknown dataset kind '" + ref.kind + "'");
}

}  // namespace

const DatasetSplit& Workspace::dataset(const DatasetRef& ref,
                                       const ExperimentConfig& cfg) {
  const std::string key = dataset_key(ref, cfg);
  auto it = impl_->datasets.find(key);
  if (it != impl_->datasets.end()) return it->second;
  DatasetSplit split;
  if (ref.kind == "preset") {
    const auto recipes = preset_recipes(cfg.resolution);
    auto r = std::find_if(recipes.begin(), recipes.end(),
                          [&](const DomainRecipe& d) { return d.domain_id == ref.id; });
    if (r == recipes.end()) throw Error("unknown preset domain '" + ref.id + "'");
    split = generate_domain(*r, cfg.suite_train, cfg.suite_test, cfg.seed);
  } else if (ref.kind == "recipe") {
    DomainRecipe r = *ref.recipe;
    r.resolution = cfg.resolution;
    split = generate_domain(r, cfg.suite_train, cfg.suite_test, cfg.seed);
  } else {
    split = load_dataset(ref.path, LoadOptions{cfg.resolution});
  }
  return impl_->datasets.emplace(key, std::move(split)).first->second;
}

namespace {

// Everything a stage's result depends on besides its data.
std::string hyper_key(const ExperimentConfig& cfg) {
  return nlohmann::json{{"lr", cfg.learning_rate},
                        {"batch", cfg.batch_size},
                        {"widths", cfg.model_widths},
                        {"seed", cfg.seed},
                        {"wct_epsilon", cfg.wct_epsilon}}
      .dump();
}

struct Context {
  Workspace& ws;
  const ExperimentConfig& cfg;
  UNetSpec net;
  std::vector<CurvePoint>& curves;
  std::set<std::string>& touched;    // ids of every sample used in training
  std::set<std::string>& style_ids;  // ids of style images
  std::string tag;                   // curve prefix
};

std::vector<LabeledPair> labeled_pairs(const std::vector<Sample>& samples) {
  std::vector<LabeledPair> out;
  for (const auto& s : samples) {
    if (!s.mask) throw Error("training sample '" + s.sample_id + "' has no mask");
    out.emplace_back(&s.image, &*s.mask);
  }
  return out;
}

Snapshot copy_snapshot(const Snapshot& s) {
  return {std::make_shared<SegModel>(*s.model), s.opt, s.curves};
}

// Supervised training of a fresh model for `epochs` epochs on `data`,
// resumed from the longest cached prefix of the same stage.
Snapshot supervised(Context& ctx, const std::string& data_key,
                    const std::vector<Sample>& data, int epochs,
                    const std::string& init_tag) {
  const std::string key = "sup|" + data_key + "|" + init_tag + "|" + hyper_key(ctx.cfg);
  for (const auto& s : data) ctx.touched.insert(s.sample_id);
  auto& cached = ctx.ws.impl().stages[key];
  Snapshot snap;
  int start = 0;
  auto it = cached.upper_bound(epochs);
  if (it != cached.begin()) {
    --it;
    start = it->first;
    snap = copy_snapshot(it->second);
  } else {
    snap.model = std::make_shared<SegModel>(
        ctx.net, mix64(ctx.cfg.seed ^ hash_name("init:" + init_tag)));
    snap.opt = make_optimizer(*snap.model, ctx.cfg.learning_rate);
  }
  if (start < epochs) {
    const auto pairs = labeled_pairs(data);
    const Rng base = seeded_rng(ctx.cfg.seed).substream(key);
    for (int e = start; e < epochs; ++e) {
      Rng er = base.substream(static_cast<std::uint64_t>(e));
      CurvePoint cp;
      cp.stage = "train:" + init_tag;
      cp.epoch = e;
      cp.seg_loss = train_epoch(*snap.model, pairs, ctx.cfg.batch_size, snap.opt, er);
      snap.curves.push_back(cp);
      log_info("  [" + init_tag + "] epoch " + std::to_string(e + 1) + "/" +
               std::to_string(epochs) + " loss " + std::to_string(cp.seg_loss));
    }
    snap.model->net().release_caches();
    cached[epochs] = copy_snapshot(snap);
  }
  for (const auto& c : snap.curves) {
    CurvePoint cp = c;
    cp.stage = ctx.tag + cp.stage;
    ctx.curves.push_back(cp);
  }
  return snap;
}

std::string join_keys(const std::vector<std::string>& keys) {
  std::string out;
  for (const auto& k : keys) out += "[" + k + "]";
  return out;
}

struct Inputs {
  const DatasetSplit* source = nullptr;
  std::string source_key;
  std::vector<const DatasetSplit*> adapt;  // target domains used for adaptation
  std::vector<std::string> adapt_keys;
};

const StyleAdapted& styled_source(Context& ctx, const Inputs& in, bool aligned) {
  const std::string key = "ss|" + in.source_key + "|" + join_keys(in.adapt_keys) +
                          "|n=" + std::to_string(ctx.cfg.n_style_images) +
                          "|eps=" + std::to_string(ctx.cfg.wct_epsilon) +
                          "|aligned=" + std::to_string(aligned) + "|" +
                          std::to_string(ctx.cfg.seed);
  auto& cache = ctx.ws.impl().styled;
  auto it = cache.find(key);
  if (it == cache.end()) {
    // One stylized copy of the source per adaptation domain, so that each
    // domain gets the coverage of a single-domain run. With one domain this
    // is exactly the single-domain set.
    const Rng base = seeded_rng(ctx.cfg.seed);
    StyleAdapted all;
    for (const DatasetSplit* t : in.adapt) {
      const StylePool pool =
          build_style_pool({t}, ctx.cfg.n_style_images, base.substream("style-pool"));
      StyleAdapted part = build_style_adapted_dataset(
          *in.source, pool, base.substream("style-adapt"), WctBackend(ctx.cfg.wct_epsilon),
          aligned);
      if (all.dataset.train.empty()) all.dataset.domain_id = part.dataset.domain_id;
      for (auto& smp : part.dataset.train) all.dataset.train.push_back(std::move(smp));
      all.manifest.insert(all.manifest.end(), part.manifest.begin(), part.manifest.end());
    }
    it = cache.emplace(key, std::move(all)).first;
  }
  for (const auto& m : it->second.manifest) ctx.style_ids.insert(m.style_id);
  return it->second;
}

// Source train images normalized by a baseline method; reference-based
// methods draw one style image per source image from the style pool.
const DatasetSplit& normalized_source(Context& ctx, const Inputs& in,
                                      NormMethod method) {
  const bool ref = needs_reference(method);
  std::string key = "norm|" + to_string(method) + "|" + in.source_key;
  if (ref) {
    key += "|" + join_keys(in.adapt_keys) + "|n=" + std::to_string(ctx.cfg.n_style_images) +
           "|" + std::to_string(ctx.cfg.seed);
  }
  auto& cache = ctx.ws.impl().derived;
  auto it = cache.find(key);
  const Rng base = seeded_rng(ctx.cfg.seed);
  StylePool pool;
  if (ref) {
    pool = build_style_pool(in.adapt, ctx.cfg.n_style_images, base.substream("style-pool"));
    for (const auto& s : pool.samples) ctx.style_ids.insert(s.sample_id);
  }
  if (it != cache.end()) return it->second;
  DatasetSplit out;
  out.domain_id = in.source->domain_id + "+" + to_string(method);
  const Rng pick = base.substream("norm-reference");
  for (std::size_t i = 0; i < in.source->train.size(); ++i) {
    Sample s = in.source->train[i];
    const Image* reference = nullptr;
    if (ref) {
      Rng r = pick.substream(static_cast<std::uint64_t>(i));
      reference = &pool.samples[r.index(pool.samples.size())].image;
    }
    s.image = normalize_baseline(s.image, method, reference);
    out.train.push_back(std::move(s));
  }
  return cache.emplace(key, std::move(out)).first->second;
}

TargetSampler make_sampler(Context& ctx, const Inputs& in) {
  std::vector<std::vector<const Image*>> domains;
  for (const DatasetSplit* t : in.adapt) {
    std::vector<const Image*> imgs;
    for (const auto& s : t->train) {
      imgs.push_back(&s.image);
      ctx.touched.insert(s.sample_id);
    }
    domains.push_back(std::move(imgs));
  }
  return TargetSampler(std::move(domains));
}

bool uses_style(Variant v) {
  return v == Variant::kFgsty || v == Variant::kFgstyCpl || v == Variant::kFgstyAdv ||
         v == Variant::kFgstyCplAdv || v == Variant::kUnaligned;
}

std::optional<NormMethod> norm_of(Variant v) {
  switch (v) {
    case Variant::kGray: return NormMethod::kGray;
    case Variant::kHistEq: return NormMethod::kHistEq;
    case Variant::kFdm: return NormMethod::kFdm;
    case Variant::kHistMatch: return NormMethod::kHistMatch;
    default: return std::nullopt;
  }
}

// Adaptation epochs after pretraining: pseudo-labeling and/or adversarial.
void adapt_stage(Context& ctx, Variant v, Snapshot& m, Snapshot* r,
                 const std::vector<Sample>& m_data, const std::vector<Sample>& r_data,
                 const Inputs& in) {
  const int epochs = ctx.cfg.adapt_epochs();
  const bool adv = v == Variant::kFgstyAdv || v == Variant::kCplAdv ||
                   v == Variant::kFgstyCplAdv;
  PseudoLabelMode mode = PseudoLabelMode::kConsensus;
  if (v == Variant::kPl) mode = PseudoLabelMode::kNaive;
  if (v == Variant::kFgstyAdv) mode = PseudoLabelMode::kNone;
  const auto m_pairs = labeled_pairs(m_data);
  const auto r_pairs = labeled_pairs(r_data);
  const TargetSampler sampler = make_sampler(ctx, in);
  const Rng base = seeded_rng(ctx.cfg.seed).substream("adapt|" + to_string(v));

  const int feat = ctx.net.widths.front();
  PixelDiscriminator<float> dm(feat, ctx.cfg.disc_width), dr(feat, ctx.cfg.disc_width);
  OptimState opt_dm, opt_dr;
  if (adv) {
    Rng rm = base.substream("disc-m"), rr = base.substream("disc-r");
    dm.init(rm);
    dr.init(rr);
    opt_dm = OptimState(dm.params().size(), ctx.cfg.learning_rate);
    opt_dr = OptimState(dr.params().size(), ctx.cfg.learning_rate);
  }
  for (int e = 0; e < epochs; ++e) {
    Rng er = base.substream(static_cast<std::uint64_t>(e));
    CurvePoint cp;
    cp.stage = ctx.tag + "adapt";
    cp.epoch = e;
    if (adv) {
      AdvParts parts;
      parts.m = m.model.get();
      parts.opt_m = &m.opt;
      parts.dm = &dm;
      parts.opt_dm = &opt_dm;
      if (r != nullptr) {
        parts.r = r->model.get();
        parts.opt_r = &r->opt;
        parts.dr = &dr;
        parts.opt_dr = &opt_dr;
      }
      const AdvEpochStats st = adv_train_epoch(
          parts, m_pairs, r_pairs, sampler, mode, ctx.cfg, er,
          static_cast<double>(e) / epochs, static_cast<double>(e + 1) / epochs);
      cp.seg_loss = st.m.seg_loss;
      cp.cpl_loss = st.m.cpl_loss;
      cp.adv_loss = st.dm_loss;
      cp.n_accepted = st.m.n_accepted;
      cp.n_rejected = st.m.n_rejected;
    } else {
      const EpochStats st = pseudo_label_epoch(*m.model, r ? r->model.get() : nullptr,
                                               m_pairs, sampler, mode, ctx.cfg, m.opt, er);
      cp.seg_loss = st.seg_loss;
      cp.cpl_loss = st.cpl_loss;
      cp.n_accepted = st.n_accepted;
      cp.n_rejected = st.n_rejected;
    }
    ctx.curves.push_back(cp);
    log_info("  [adapt] epoch " + std::to_string(e + 1) + "/" + std::to_string(epochs) +
             " seg " + std::to_string(cp.seg_loss) + " cpl " +
             std::to_string(cp.cpl_loss) + " accepted " + std::to_string(cp.n_accepted) +
             "/" + std::to_string(cp.n_accepted + cp.n_rejected));
  }
}

// Trains the segmentation model of one variant; returns it with the
// test-time image transform (identity unless the variant normalizes).
std::shared_ptr<SegModel> train_variant(Context& ctx, Variant v, const Inputs& in,
                                        std::optional<NormMethod>* test_transform) {
  const ExperimentConfig& cfg = ctx.cfg;
  const int total = cfg.epochs;
  const int pre = cfg.pretrain_epochs();
  const auto& src = in.source->train;
  *test_transform = std::nullopt;

  switch (v) {
    case Variant::kSourceOnly:
      return supervised(ctx, in.source_key, src, total, "M").model;
    case Variant::kTargetOnly: {
      std::vector<Sample> data;
      for (const DatasetSplit* t : in.adapt) {
        data.insert(data.end(), t->train.begin(), t->train.end());
      }
      return supervised(ctx, "target" + join_keys(in.adapt_keys), data, total, "M").model;
    }
    case Variant::kFgsty:
    case Variant::kUnaligned: {
      const StyleAdapted& ss = styled_source(ctx, in, v == Variant::kFgsty);
      for (const auto& s : src) ctx.touched.insert(s.sample_id);
      const std::string key = "ss" + std::string(v == Variant::kFgsty ? "" : "-unaligned") +
                              "|" + in.source_key + join_keys(in.adapt_keys) + "|n=" +
                              std::to_string(cfg.n_style_images);
      return supervised(ctx, key, ss.dataset.train, total, "M").model;
    }
    case Variant::kGray:
    case Variant::kHistEq:
    case Variant::kFdm:
    case Variant::kHistMatch: {
      const NormMethod method = *norm_of(v);
      const DatasetSplit& norm = normalized_source(ctx, in, method);
      for (const auto& s : src) ctx.touched.insert(s.sample_id);
      if (!needs_reference(method)) *test_transform = method;
      std::string key = "norm-" + to_string(method) + "|" + in.source_key;
      if (needs_reference(method)) {
        key += join_keys(in.adapt_keys) + "|n=" + std::to_string(cfg.n_style_images);
      }
      return supervised(ctx, key, norm.train, total, "M").model;
    }
    case Variant::kPl:
    case Variant::kCpl:
    case Variant::kCplAdv:
    case Variant::kFgstyCpl:
    case Variant::kFgstyAdv:
    case Variant::kFgstyCplAdv: {
      const bool style = uses_style(v);
      const std::vector<Sample>* m_data = &src;
      std::string m_key = in.source_key;
      if (style) {
        const StyleAdapted& ss = styled_source(ctx, in, true);
        m_data = &ss.dataset.train;
        m_key = "ss|" + in.source_key + join_keys(in.adapt_keys) + "|n=" +
                std::to_string(cfg.n_style_images);
        for (const auto& s : src) ctx.touched.insert(s.sample_id);
      }
      Snapshot m = supervised(ctx, m_key, *m_data, pre, "M");
      std::optional<Snapshot> r;
      if (v != Variant::kPl && v != Variant::kFgstyAdv) {
        r = supervised(ctx, in.source_key, src, pre, "R");
      }
      adapt_stage(ctx, v, m, r ? &*r : nullptr, *m_data, src, in);
      m.model->net().release_caches();
      return m.model;
    }
  }
  throw Error("unhandled variant");
}

struct EvalTarget {
  std::string name;
  const DatasetSplit* split;
};

// Checks that no evaluated test sample and no sample of `forbidden`
// domains reached training, and that style images come from adaptation
// train splits.
void audit_ids(const std::set<std::string>& touched, const std::set<std::string>& style_ids,
               const std::vector<EvalTarget>& evals, const Inputs& in,
               const std::vector<const DatasetSplit*>& forbidden) {
  for (const auto& e : evals) {
    for (const auto& s : e.split->test) {
      if (touched.count(s.sample_id) || style_ids.count(s.sample_id)) {
        throw Error("id audit: test sample '" + s.sample_id + "' was used in training");
      }
    }
  }
  for (const DatasetSplit* f : forbidden) {
    for (const auto* part : {&f->train, &f->test}) {
      for (const auto& s : *part) {
        if (touched.count(s.sample_id) || style_ids.count(s.sample_id)) {
          throw Error("id audit: held-out sample '" + s.sample_id + "' was used in training");
        }
      }
    }
  }
  std::set<std::string> allowed;
  for (const DatasetSplit* t : in.adapt) {
    for (const auto& s : t->train) allowed.insert(s.sample_id);
  }
  for (const auto& id : style_ids) {
    if (!allowed.count(id)) {
      throw Error("id audit: style image '" + id + "' is not from a target train split");
    }
  }
}

Predictor eval_predictor(const SegModel& model, std::optional<NormMethod> transform) {
  if (!transform) return model.predictor();
  return [&model, m = *transform](const Image& img) {
    return model.predict(normalize_baseline(img, m));
  };
}

std::vector<Sample> subsample_source(const std::vector<Sample>& train, double fraction,
                                     std::uint64_t seed) {
  if (fraction >= 1.0) return train;
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return train[a].sample_id < train[b].sample_id; });
  Rng rng = seeded_rng(seed).substream("source-subsample");
  rng.shuffle(idx);
  const auto keep = static_cast<std::size_t>(
      std::max<long>(1, std::lround(fraction * static_cast<double>(train.size()))));
  idx.resize(std::min(keep, idx.size()));
  std::sort(idx.begin(), idx.end());
  std::vector<Sample> out;
  for (std::size_t i : idx) out.push_back(train[i]);
  return out;
}

// Shared body of every mode: one training over `adapt_refs`, evaluation on
// each of `eval_refs`.
void run_once(const RunSpec& spec, Workspace& ws, const std::vector<DatasetRef>& adapt_refs,
              const std::vector<DatasetRef>& eval_refs,
              const std::vector<DatasetRef>& forbidden_refs, const std::string& tag,
              RunResult& result) {
  // A reduced source keeps the optimizer-step budget of the full one.
  ExperimentConfig cfg = spec.config;
  if (cfg.source_fraction < 1.0) {
    cfg.epochs = static_cast<int>(std::lround(cfg.epochs / cfg.source_fraction));
  }
  Inputs in;
  const DatasetSplit& full_source = ws.dataset(spec.source, cfg);
  in.source_key = dataset_key(spec.source, cfg);
  DatasetSplit reduced;
  if (cfg.source_fraction < 1.0) {
    reduced.domain_id = full_source.domain_id;
    reduced.train = subsample_source(full_source.train, cfg.source_fraction, cfg.seed);
    in.source_key += "|frac=" + std::to_string(cfg.source_fraction);
    in.source = &reduced;
  } else {
    in.source = &full_source;
  }
  for (const auto& r : adapt_refs) {
    in.adapt.push_back(&ws.dataset(r, cfg));
    in.adapt_keys.push_back(dataset_key(r, cfg));
  }
  if (in.adapt.empty()) throw Error("run: no target domains");

  std::set<std::string> touched, style_ids;
  Context ctx{ws, cfg, UNetSpec{cfg.model_widths, 3, 0.1}, result.curves, touched, style_ids,
              tag};
  std::optional<NormMethod> transform;
  const std::shared_ptr<SegModel> model = train_variant(ctx, spec.variant, in, &transform);

  std::vector<EvalTarget> evals;
  for (const auto& r : eval_refs) evals.push_back({{}, &ws.dataset(r, cfg)});
  std::vector<const DatasetSplit*> forbidden;
  for (const auto& r : forbidden_refs) forbidden.push_back(&ws.dataset(r, cfg));
  audit_ids(touched, style_ids, evals, in, forbidden);

  for (auto& e : evals) {
    std::string name = e.split->domain_id;
    for (int k = 2; result.per_target_miou.count(name); ++k) {
      name = e.split->domain_id + "#" + std::to_string(k);
    }
    const Evaluation ev =
        evaluate_model(eval_predictor(*model, transform), e.split->test, cfg.predict_threshold);
    result.per_target_miou[name] = ev.mean_miou;
    result.target_order.push_back(name);
    ws.impl().last_models[name] = model;
    log_info(to_string(spec.variant) + " on " + name + ": mIoU " + std::to_string(ev.mean_miou));
  }
}

void finish(RunResult& r, const RunSpec& spec,
            std::chrono::steady_clock::time_point t0) {
  double sum = 0.0;
  for (const auto& t : r.target_order) sum += r.per_target_miou.at(t);
  r.average_miou = r.target_order.empty() ? 0.0 : sum / r.target_order.size();
  r.n_accepted = r.n_rejected = 0;
  for (const auto& c : r.curves) {
    r.n_accepted += c.n_accepted;
    r.n_rejected += c.n_rejected;
  }
  r.name = spec.name;
  r.variant = spec.variant;
  r.mode = spec.mode;
  r.spec = spec;
  r.seed = spec.config.seed;
  r.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

RunResult run(const RunSpec& spec, Workspace& ws) {
  spec.config.validate();
  if (spec.mode == RunMode::kMultiTarget) return run_multi_target(spec, ws);
  if (spec.mode == RunMode::kDomainGeneralization) {
    if (!spec.test_domain) throw Error("domain generalization needs a held-out test domain");
    return run_domain_generalization(spec, *spec.test_domain, ws);
  }
  if (spec.targets.empty()) throw Error("run: no target domains");
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  for (const auto& t : spec.targets) {
    const std::string tag = ws.dataset(t, spec.config).domain_id + ":";
    run_once(spec, ws, {t}, {t}, {}, tag, result);
  }
  finish(result, spec, t0);
  return result;
}

RunResult run(const RunSpec& spec) {
  Workspace ws;
  return run(spec, ws);
}

RunResult run_multi_target(const RunSpec& spec, Workspace& ws) {
  spec.config.validate();
  if (spec.targets.size() < 2) throw Error("multi-target adaptation needs at least 2 targets");
  const auto t0 = std::chrono::steady_clock::now();
  RunSpec s = spec;
  s.mode = RunMode::kMultiTarget;
  RunResult result;
  run_once(s, ws, s.targets, s.targets, {}, "multi:", result);
  finish(result, s, t0);
  return result;
}

RunResult run_domain_generalization(const RunSpec& spec, const DatasetRef& test_domain,
                                    Workspace& ws) {
  spec.config.validate();
  if (spec.targets.empty()) throw Error("domain generalization needs auxiliary domains");
  if (spec.variant == Variant::kTargetOnly) {
    throw Error("target_only is undefined under domain generalization");
  }
  const std::string held = dataset_key(test_domain, spec.config);
  for (const auto& t : spec.targets) {
    if (dataset_key(t, spec.config) == held) {
      throw Error("domain generalization leakage: the test domain is among the auxiliaries");
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  RunSpec s = spec;
  s.mode = RunMode::kDomainGeneralization;
  s.test_domain = test_domain;
  RunResult result;
  run_once(s, ws, s.targets, {test_domain}, {test_domain}, "dg:", result);
  finish(result, s, t0);
  return result;
}

RunResult replay(const RunSpec& snapshot) {
  Workspace ws;
  return run(snapshot, ws);
}

SweepResult run_sweep(SweepKind kind, const std::vector<double>& grid,
                      const RunSpec& base, Workspace& ws) {
  if (grid.empty()) throw Error("sweep: empty grid");
  SweepResult out;
  out.kind = kind;
  out.grid = grid;
  for (double g : grid) {
    RunSpec s = base;
    switch (kind) {
      case SweepKind::kAlpha:
        s.config.alpha = g;
        break;
      case SweepKind::kNStyle:
        if (g < 1.0 || g != std::floor(g)) throw Error("sweep: n_style values must be integers >= 1");
        s.config.n_style_images = static_cast<int>(g);
        break;
      case SweepKind::kSourceSize:
        s.config.source_fraction = g;
        break;
    }
    s.config.validate();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", g);
    s.name = base.name + "-" + to_string(kind) + "=" + buf;
    out.runs.push_back(run(s, ws));
  }
  return out;
}

std::vector<SweepRow> alpha_quality_table(const RunSpec& spec,
                                          const std::vector<double>& alphas,
                                          Workspace& ws) {
  const ExperimentConfig& cfg = spec.config;
  cfg.validate();
  if (spec.targets.empty()) throw Error("alpha_quality_table: no target");
  Inputs in;
  in.source = &ws.dataset(spec.source, cfg);
  in.source_key = dataset_key(spec.source, cfg);
  in.adapt = {&ws.dataset(spec.targets.front(), cfg)};
  in.adapt_keys = {dataset_key(spec.targets.front(), cfg)};
  std::vector<CurvePoint> curves;
  std::set<std::string> touched, style_ids;
  Context ctx{ws, cfg, UNetSpec{cfg.model_widths, 3, 0.1}, curves, touched, style_ids, ""};
  const StyleAdapted& ss = styled_source(ctx, in, true);
  const Snapshot m = supervised(
      ctx, "ss|" + in.source_key + join_keys(in.adapt_keys) + "|n=" +
               std::to_string(cfg.n_style_images),
      ss.dataset.train, cfg.pretrain_epochs(), "M");
  const Snapshot r = supervised(ctx, in.source_key, in.source->train, cfg.pretrain_epochs(), "R");
  return pseudo_label_sweep(*m.model, *r.model, in.adapt.front()->train, alphas,
                            cfg.predict_threshold);
}

std::map<std::string, std::shared_ptr<const SegModel>> last_models(Workspace& ws) {
  return ws.impl().last_models;
}

std::filesystem::path make_run_dir(const std::string& name,
                                   std::optional<std::filesystem::path> root) {
  if (!root) {
    const char* env = std::getenv("FGSTY_RUNS_DIR");
    root = (env != nullptr && *env != '\0') ? std::filesystem::path(env)
                                            : std::filesystem::path("runs");
  }
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
  std::filesystem::path dir = *root / (std::string(stamp) + "-" + name);
  for (int k = 2; std::filesystem::exists(dir); ++k) {
    dir = *root / (std::string(stamp) + "-" + name + "-" + std::to_string(k));
  }
  std::filesystem::create_directories(dir);
  return dir;
}

void persist_run(const RunResult& result, const std::filesystem::path& dir,
                 Workspace* ws) {
  std::filesystem::create_directories(dir);
  save_config(result.spec.config, dir / "config.json");
  {
    std::ofstream out(dir / "spec.json");
    if (!out) throw Error("cannot write " + (dir / "spec.json").string());
    out << nlohmann::json(result.spec).dump(2) << '\n';
  }
  emit_report({result}, dir);
  if (ws != nullptr) {
    std::filesystem::create_directories(dir / "checkpoints");
    for (const auto& name : result.target_order) {
      auto models = ws->impl().last_models;
      auto it = models.find(name);
      if (it != models.end()) {
        save_checkpoint(*it->second, dir / "checkpoints" / (name + ".ckpt"));
      }
    }
  }
}

}  // namespace fgsty
