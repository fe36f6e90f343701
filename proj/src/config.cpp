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

#include "fgsty/config.hpp"

#include <cmath>
#include <fstream>

#include "fgsty/core.hpp"

namespace fgsty {

using nlohmann::json;

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error("config: " + msg); };
  if (!(alpha > 0.0 && alpha <= 1.0)) fail("alpha must be in (0,1]");
  if (!(pl_threshold > 0.0 && pl_threshold < 1.0))
    fail("pl_threshold must be in (0,1)");
  if (!(predict_threshold > 0.0 && predict_threshold < 1.0))
    fail("predict_threshold must be in (0,1)");
  if (n_style_images < 1) fail("n_style_images must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    fail("learning_rate must be finite and >= 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(grl_lambda >= 0.0)) fail("grl_lambda must be >= 0");
  if (grl_schedule != "constant" && grl_schedule != "ramp")
    fail("grl_schedule must be constant or ramp");
  if (!(wct_epsilon > 0.0)) fail("wct_epsilon must be > 0");
  if (resolution < 8) fail("resolution must be >= 8");
  if (model_widths.empty()) fail("model_widths must be non-empty");
  for (int w : model_widths) {
    if (w < 1) fail("model_widths entries must be positive");
  }
  const int div = 1 << (model_widths.size() - 1);
  if (resolution % div != 0) {
    fail("resolution must be divisible by " + std::to_string(div));
  }
  if (disc_width < 1) fail("disc_width must be >= 1");
  if (!(pretrain_fraction >= 0.0 && pretrain_fraction <= 1.0))
    fail("pretrain_fraction must be in [0,1]");
  if (suite_train < 1 || suite_test < 1) fail("suite sizes must be >= 1");
  if (!(source_fraction > 0.0 && source_fraction <= 1.0))
    fail("source_fraction must be in (0,1]");
}

int ExperimentConfig::pretrain_epochs() const {
  return static_cast<int>(std::lround(epochs * pretrain_fraction));
}

void to_json(json& j, const LossWeights& w) {
  j = json{{"seg", w.seg}, {"cpl", w.cpl}, {"adv", w.adv}};
}

void from_json(const json& j, LossWeights& w) {
  for (const auto& [key, value] : j.items()) {
    if (key == "seg") {
      w.seg = value.get<double>();
    } else if (key == "cpl") {
      w.cpl = value.get<double>();
    } else if (key == "adv") {
      w.adv = value.get<double>();
    } else {
      throw Error("config: unknown loss_weights field '" + key + "'");
    }
  }
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"alpha", c.alpha},
           {"pl_threshold", c.pl_threshold},
           {"predict_threshold", c.predict_threshold},
           {"n_style_images", c.n_style_images},
           {"learning_rate", c.learning_rate},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"grl_lambda", c.grl_lambda},
           {"grl_schedule", c.grl_schedule},
           {"wct_epsilon", c.wct_epsilon},
           {"loss_weights", c.loss_weights},
           {"resolution", c.resolution},
           {"model_widths", c.model_widths},
           {"disc_width", c.disc_width},
           {"pretrain_fraction", c.pretrain_fraction},
           {"suite_train", c.suite_train},
           {"suite_test", c.suite_test},
           {"source_fraction", c.source_fraction}};
}

void from_json(const json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw Error("config: expected a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "alpha") c.alpha = v.get<double>();
    else if (key == "pl_threshold") c.pl_threshold = v.get<double>();
    else if (key == "predict_threshold") c.predict_threshold = v.get<double>();
    else if (key == "n_style_images") c.n_style_images = v.get<int>();
    else if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "grl_lambda") c.grl_lambda = v.get<double>();
    else if (key == "grl_schedule") c.grl_schedule = v.get<std::string>();
    else if (key == "wct_epsilon") c.wct_epsilon = v.get<double>();
    else if (key == "loss_weights") c.loss_weights = v.get<LossWeights>();
    else if (key == "resolution") c.resolution = v.get<int>();
    else if (key == "model_widths") c.model_widths = v.get<std::vector<int>>();
    else if (key == "disc_width") c.disc_width = v.get<int>();
    else if (key == "pretrain_fraction") c.pretrain_fraction = v.get<double>();
    else if (key == "suite_train") c.suite_train = v.get<int>();
    else if (key == "suite_test") c.suite_test = v.get<int>();
    else if (key == "source_fraction") c.source_fraction = v.get<double>();
    else throw Error("config: unknown field '" + key + "'");
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg = j.get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_config(const ExperimentConfig& cfg,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write config " + path.string());
  out << json(cfg).dump(2) << "\n";
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error("override '" + std::string(assignment) +
                "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }

  json doc = cfg;
  json* slot = &doc;
  std::string::size_type start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (!slot->is_object() || !slot->contains(part)) {
      throw Error("override: unknown config field '" + key + "'");
    }
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *slot = value;

  ExperimentConfig updated;
  try {
    updated = doc.get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw Error("override " + key + ": " + e.what());
  }
  updated.validate();
  cfg = std::move(updated);
}

}  // namespace fgsty
