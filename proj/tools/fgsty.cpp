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

// Command-line front end.
//
//   fgsty generate  --out DIR [--seed N] [--set k=v ...]
//   fgsty stylize   --source DIR --style DIR --out DIR [--unaligned]
//   fgsty train     [--variant V] [--source REF] [--target REF ...]
//   fgsty adapt     [--variant V] [--mode M] [--test-domain REF] ...
//   fgsty evaluate  --checkpoint FILE --data DIR [--out DIR]
//   fgsty sweep     --kind alpha|n_style|source_size --grid a,b,c ...
//   fgsty report    --in RUN_DIR ... --out DIR
//
// Exit codes: 0 success, 1 user error (bad flags, invalid input), 2
// internal error (training diverged, unexpected failure).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fgsty/config.hpp"
#include "fgsty/dataset.hpp"
#include "fgsty/log.hpp"
#include "fgsty/metrics.hpp"
#include "fgsty/pipeline.hpp"
#include "fgsty/rng.hpp"
#include "fgsty/segmodel.hpp"
#include "fgsty/stylizer.hpp"
#include "fgsty/synthdata.hpp"

namespace fs = std::filesystem;
using namespace fgsty;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config field, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "experiment seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_flag("--quiet", c.quiet, "only print warnings");
}

ExperimentConfig make_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

// A dataset argument is a directory when it exists on disk, else a preset
// domain name.
DatasetRef parse_ref(const std::string& s) {
  if (fs::is_directory(s)) return DatasetRef::dir(s);
  return DatasetRef::preset(s);
}

std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("--grid: '" + item + "' is not a number");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

fs::path output_dir(const Common& c, const std::string& name) {
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    return c.out;
  }
  return make_run_dir(name);
}

int cmd_generate(const Common& c) {
  const ExperimentConfig cfg = make_config(c);
  if (c.out.empty()) throw Error("generate: --out is required");
  const PresetSuite suite = preset_suite(cfg.seed, cfg.suite_train, cfg.suite_test, cfg.resolution);
  nlohmann::json recipes = nlohmann::json::array();
  std::vector<std::pair<const DatasetSplit*, const DomainRecipe*>> all = {
      {&suite.source, &suite.source_recipe}};
  for (std::size_t i = 0; i < suite.targets.size(); ++i) {
    all.emplace_back(&suite.targets[i], &suite.target_recipes[i]);
  }
  ReportExtras extras;
  for (const auto& [split, recipe] : all) {
    save_dataset(*split, fs::path(c.out) / split->domain_id);
    std::ofstream(fs::path(c.out) / split->domain_id / "recipe.json")
        << nlohmann::json(*recipe).dump(2) << '\n';
    recipes.push_back(*recipe);
    extras.label_distributions.emplace_back(split->domain_id, label_distribution_summary(*split));
    log_info("wrote " + split->domain_id + ": " + std::to_string(split->train.size()) +
             " train, " + std::to_string(split->test.size()) + " test");
  }
  std::ofstream(fs::path(c.out) / "recipes.json")
      << nlohmann::json{{"seed", cfg.seed}, {"domains", recipes}}.dump(2) << '\n';
  emit_report({}, fs::path(c.out) / "report", extras);
  return 0;
}

int cmd_stylize(const Common& c, const std::string& source, const std::vector<std::string>& styles,
                bool unaligned) {
  const ExperimentConfig cfg = make_config(c);
  if (c.out.empty()) throw Error("stylize: --out is required");
  const DatasetSplit src = load_dataset(source, LoadOptions{cfg.resolution});
  std::vector<DatasetSplit> style_sets;
  for (const auto& s : styles) style_sets.push_back(load_dataset(s, LoadOptions{cfg.resolution}));
  std::vector<const DatasetSplit*> ptrs;
  for (const auto& s : style_sets) ptrs.push_back(&s);
  const Rng base = seeded_rng(cfg.seed);
  const StylePool pool = build_style_pool(ptrs, cfg.n_style_images, base.substream("style-pool"));
  const StyleAdapted ss = build_style_adapted_dataset(
      src, pool, base.substream("style-adapt"), WctBackend(cfg.wct_epsilon), !unaligned);
  save_dataset(ss.dataset, c.out);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& m : ss.manifest) {
    entries.push_back({{"source_id", m.source_id},
                       {"style_id", m.style_id},
                       {"style_domain", m.style_domain},
                       {"seed", cfg.seed}});
  }
  std::ofstream(fs::path(c.out) / "manifest.json")
      << nlohmann::json{{"seed", cfg.seed}, {"aligned", !unaligned}, {"entries", entries}}.dump(2)
      << '\n';
  log_info("stylized " + std::to_string(ss.dataset.train.size()) + " images");
  return 0;
}

struct RunArgs {
  std::string variant;
  std::string mode = "single_target";
  std::string source = "S";
  std::vector<std::string> targets;
  std::string test_domain;
  std::string name;
};

RunSpec make_spec(const Common& c, const RunArgs& a, const std::string& default_variant) {
  RunSpec spec;
  spec.config = make_config(c);
  spec.variant = parse_variant(a.variant.empty() ? default_variant : a.variant);
  spec.mode = parse_mode(a.mode);
  spec.source = parse_ref(a.source);
  const std::vector<std::string> targets =
      a.targets.empty() ? std::vector<std::string>{"T1", "T2", "T3", "T4"} : a.targets;
  for (const auto& t : targets) {
    if (t == a.test_domain) continue;  // held out under domain generalization
    spec.targets.push_back(parse_ref(t));
  }
  if (!a.test_domain.empty()) spec.test_domain = parse_ref(a.test_domain);
  spec.name = a.name.empty() ? to_string(spec.variant) : a.name;
  return spec;
}

void print_result(const RunResult& r) {
  for (const auto& t : r.target_order) {
    std::fprintf(stderr, "  %-8s mIoU %.4f\n", t.c_str(), r.per_target_miou.at(t));
  }
  std::fprintf(stderr, "  average  mIoU %.4f  (%.1f s)\n", r.average_miou, r.wall_clock_s);
}

int cmd_run(const Common& c, const RunArgs& a, const std::string& default_variant) {
  const RunSpec spec = make_spec(c, a, default_variant);
  Workspace ws;
  const RunResult r = run(spec, ws);
  const fs::path dir = output_dir(c, spec.name);
  persist_run(r, dir, &ws);
  print_result(r);
  std::fprintf(stderr, "results in %s\n", dir.string().c_str());
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& checkpoint, const std::string& data) {
  const ExperimentConfig cfg = make_config(c);
  const UNetSpec spec = read_checkpoint_spec(checkpoint);
  const SegModel model = load_checkpoint(checkpoint, spec);
  const DatasetSplit split = load_dataset(data, LoadOptions{cfg.resolution});
  const Evaluation ev = evaluate_model(model.predictor(), split.test, cfg.predict_threshold);
  std::fprintf(stderr, "mean mIoU %.4f over %zu samples\n", ev.mean_miou, split.test.size());
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_scores_csv(ev, fs::path(c.out) / "scores.csv");
  }
  return 0;
}

int cmd_sweep(const Common& c, const RunArgs& a, const std::string& kind, const std::string& grid) {
  const RunSpec base = make_spec(c, a, "fgsty_cpl");
  const SweepKind k = parse_sweep_kind(kind);
  Workspace ws;
  const SweepResult sweep = run_sweep(k, parse_grid(grid), base, ws);
  ReportExtras extras;
  if (k == SweepKind::kAlpha) extras.alpha_rows = alpha_quality_table(base, sweep.grid, ws);
  const fs::path dir = output_dir(c, base.name + "-sweep-" + kind);
  save_config(base.config, dir / "config.json");
  emit_report(sweep.runs, dir, extras);
  for (const auto& r : sweep.runs) {
    std::fprintf(stderr, "%s\n", r.name.c_str());
    print_result(r);
  }
  std::fprintf(stderr, "results in %s\n", dir.string().c_str());
  return 0;
}

int cmd_report(const Common& c, const std::vector<std::string>& inputs) {
  if (c.out.empty()) throw Error("report: --out is required");
  std::vector<RunResult> results;
  for (const auto& in : inputs) {
    const fs::path file = fs::is_directory(in) ? fs::path(in) / "results.json" : fs::path(in);
    std::ifstream f(file);
    if (!f) throw Error("cannot read " + file.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw Error(file.string() + ": " + e.what());
    }
    for (const auto& r : j.at("runs")) results.push_back(r.get<RunResult>());
  }
  emit_report(results, c.out);
  std::fprintf(stderr, "report of %zu runs in %s\n", results.size(), c.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Foreground-aware stylization and consensus pseudo-labeling"};
  app.require_subcommand(1);

  Common common;
  RunArgs ra;
  std::string source_dir, checkpoint, data, kind, grid;
  std::vector<std::string> style_dirs, inputs;
  bool unaligned = false;

  auto* gen = app.add_subcommand("generate", "render the synthetic preset to disk");
  add_common(gen, common);

  auto* sty = app.add_subcommand("stylize", "build a style-adapted copy of a dataset");
  add_common(sty, common);
  sty->add_option("--source", source_dir, "source dataset directory")->required()->check(CLI::ExistingDirectory);
  sty->add_option("--style", style_dirs, "target dataset directories (style images)")->required();
  sty->add_flag("--unaligned", unaligned, "whole-image transfer instead of per-region");

  auto add_run_opts = [&](CLI::App* cmd) {
    add_common(cmd, common);
    cmd->add_option("--variant", ra.variant, "method variant");
    cmd->add_option("--mode", ra.mode, "single_target, multi_target or domain_generalization");
    cmd->add_option("--source", ra.source, "source dataset: preset name or directory");
    cmd->add_option("--target", ra.targets, "target dataset (repeatable)");
    cmd->add_option("--test-domain", ra.test_domain, "held-out domain (domain generalization)");
    cmd->add_option("--name", ra.name, "run name");
  };
  auto* train = app.add_subcommand("train", "train a non-adaptive variant (default source_only)");
  add_run_opts(train);
  auto* adapt = app.add_subcommand("adapt", "run an adaptation variant (default fgsty_cpl)");
  add_run_opts(adapt);

  auto* eval = app.add_subcommand("evaluate", "score a checkpoint on a dataset's test split");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "dataset directory")->required()->check(CLI::ExistingDirectory);

  auto* sweep = app.add_subcommand("sweep", "repeat a run over one knob");
  add_run_opts(sweep);
  sweep->add_option("--kind", kind, "alpha, n_style or source_size")->required();
  sweep->add_option("--grid", grid, "comma-separated values")->required();

  auto* rep = app.add_subcommand("report", "merge run results into one report");
  add_common(rep, common);
  rep->add_option("--in", inputs, "run directories or results.json files")->required();

  if (argc <= 1) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, std::cerr, std::cerr);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, std::cerr, std::cerr);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return 1;
  }
  set_log_level(common.quiet ? LogLevel::kWarning : LogLevel::kInfo);

  try {
    if (gen->parsed()) return cmd_generate(common);
    if (sty->parsed()) return cmd_stylize(common, source_dir, style_dirs, unaligned);
    if (train->parsed()) return cmd_run(common, ra, "source_only");
    if (adapt->parsed()) return cmd_run(common, ra, "fgsty_cpl");
    if (eval->parsed()) return cmd_evaluate(common, checkpoint, data);
    if (sweep->parsed()) return cmd_sweep(common, ra, kind, grid);
    if (rep->parsed()) return cmd_report(common, inputs);
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: invalid JSON input: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
