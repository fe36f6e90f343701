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

#ifndef FGSTY_PIPELINE_HPP_
#define FGSTY_PIPELINE_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgsty/config.hpp"
#include "fgsty/core.hpp"
#include "fgsty/cpl.hpp"
#include "fgsty/segmodel.hpp"
#include "fgsty/synthdata.hpp"

namespace fgsty {

enum class Variant {
  kSourceOnly,
  kTargetOnly,
  kPl,
  kFgsty,
  kCpl,
  kFgstyCpl,
  kFgstyAdv,
  kCplAdv,
  kFgstyCplAdv,
  kGray,
  kHistEq,
  kFdm,
  kHistMatch,
  kUnaligned,
};

enum class RunMode { kSingleTarget, kMultiTarget, kDomainGeneralization };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);
RunMode parse_mode(const std::string& name);
std::string to_string(RunMode m);
const std::vector<Variant>& all_variants();

/// Names a dataset so that a run can be replayed from its snapshot:
///   preset: a domain of the synthetic preset ("S", "T1".."T4"), rendered
///           from the config's seed, sizes and resolution;
///   recipe: a synthetic domain from an inline recipe, same seed policy;
///   dir:    a directory in the standard layout.
struct DatasetRef {
  std::string kind = "preset";
  std::string id;
  std::filesystem::path path;
  std::optional<DomainRecipe> recipe;

  static DatasetRef preset(std::string id) { return {"preset", std::move(id), {}, {}}; }
  static DatasetRef dir(std::filesystem::path p) { return {"dir", {}, std::move(p), {}}; }
  static DatasetRef from_recipe(DomainRecipe r) {
    std::string id = r.domain_id;
    return {"recipe", std::move(id), {}, std::move(r)};
  }
};

void to_json(nlohmann::json& j, const DatasetRef& r);
void from_json(const nlohmann::json& j, DatasetRef& r);

struct RunSpec {
  std::string name = "run";
  Variant variant = Variant::kFgstyCpl;
  DatasetRef source = DatasetRef::preset("S");
  std::vector<DatasetRef> targets;
  RunMode mode = RunMode::kSingleTarget;
  // Held-out domain, domain generalization only.
  std::optional<DatasetRef> test_domain;
  ExperimentConfig config;
};

void to_json(nlohmann::json& j, const RunSpec& s);
void from_json(const nlohmann::json& j, RunSpec& s);

struct CurvePoint {
  std::string stage;  // e.g. "pretrain:M", "adapt"
  int epoch = 0;
  double seg_loss = 0.0;
  double cpl_loss = 0.0;
  double adv_loss = 0.0;
  int n_accepted = 0;
  int n_rejected = 0;
};

struct RunResult {
  std::string name;
  Variant variant = Variant::kSourceOnly;
  RunMode mode = RunMode::kSingleTarget;
  std::vector<std::string> target_order;
  std::map<std::string, double> per_target_miou;
  double average_miou = 0.0;
  std::vector<CurvePoint> curves;
  int n_accepted = 0;
  int n_rejected = 0;
  RunSpec spec;  // snapshot, enough to replay
  std::uint64_t seed = 0;
  double wall_clock_s = 0.0;
};

void to_json(nlohmann::json& j, const RunResult& r);
void from_json(const nlohmann::json& j, RunResult& r);

/// Holds resolved datasets and trained stages so that variants sharing a
/// stage (same data, config and initialization) train it once. Caching is
/// exact: a cached stage continues with the same per-epoch streams it
/// would have used when trained from scratch.
class Workspace {
 public:
  Workspace();
  ~Workspace();
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  /// Resolves a dataset reference under `cfg` (seed, sizes, resolution).
  const DatasetSplit& dataset(const DatasetRef& ref, const ExperimentConfig& cfg);

  /// Drops every cached dataset and stage.
  void clear();

  struct Impl;
  Impl& impl() { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

/// Single-target runs adapt to each listed target separately and average.
/// Multi-target and domain generalization dispatch to their functions.
RunResult run(const RunSpec& spec, Workspace& ws);
RunResult run(const RunSpec& spec);

/// One adaptation over the union of >= 2 targets, evaluated per target.
RunResult run_multi_target(const RunSpec& spec, Workspace& ws);

/// Adapts to spec.targets (auxiliaries) and evaluates on the held-out
/// domain only. Throws if the held-out domain is among the auxiliaries.
RunResult run_domain_generalization(const RunSpec& spec, const DatasetRef& test_domain,
                                    Workspace& ws);

/// Re-runs a result's snapshot in a fresh workspace.
RunResult replay(const RunSpec& snapshot);

enum class SweepKind { kAlpha, kNStyle, kSourceSize };
SweepKind parse_sweep_kind(const std::string& name);
std::string to_string(SweepKind k);

struct SweepResult {
  SweepKind kind = SweepKind::kAlpha;
  std::vector<double> grid;
  std::vector<RunResult> runs;
};

/// Repeats `base` with one knob set to each grid value (alpha,
/// n_style_images or source_fraction), sharing the seed.
SweepResult run_sweep(SweepKind kind, const std::vector<double>& grid,
                      const RunSpec& base, Workspace& ws);

/// Pseudo-label acceptance and quality per alpha for the pretrained M and R
/// of `spec` (first target, against its train labels).
std::vector<SweepRow> alpha_quality_table(const RunSpec& spec,
                                          const std::vector<double>& alphas,
                                          Workspace& ws);

/// Trained segmentation model of the last run() per target (kept for
/// checkpointing); empty when the run has not happened in this workspace.
std::map<std::string, std::shared_ptr<const SegModel>> last_models(Workspace& ws);

/// Creates `<root>/<YYYYmmdd-HHMMSS>-<name>/`, unique within root. The root
/// defaults to $FGSTY_RUNS_DIR or "runs".
std::filesystem::path make_run_dir(const std::string& name,
                                   std::optional<std::filesystem::path> root = {});

struct ReportExtras {
  std::vector<SweepRow> alpha_rows;
  std::vector<std::pair<std::string, LabelDistribution>> label_distributions;
};

/// Writes results.json, summary.csv and plots/*.png under `out`.
void emit_report(const std::vector<RunResult>& results,
                 const std::filesystem::path& out,
                 const ReportExtras& extras = {});

/// Writes config.json, spec.json and the report for one run, plus
/// checkpoints of its models when available in `ws`.
void persist_run(const RunResult& result, const std::filesystem::path& dir,
                 Workspace* ws = nullptr);

}  // namespace fgsty

#endif  // FGSTY_PIPELINE_HPP_
