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

#include "fgsty/metrics.hpp"

#include <cstdio>
#include <fstream>

namespace fgsty {

double iou(const BinaryMask& a, const BinaryMask& b, MaskClass cls) {
  require_same_size(a, b, "iou");
  const std::uint8_t want = cls == MaskClass::kForeground ? 1 : 0;
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool in_a = (a.data[i] != 0) == (want != 0);
    const bool in_b = (b.data[i] != 0) == (want != 0);
    inter += (in_a && in_b) ? 1 : 0;
    uni += (in_a || in_b) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

IoUReport miou(const BinaryMask& a, const BinaryMask& b) {
  IoUReport r;
  r.iou_fg = iou(a, b, MaskClass::kForeground);
  r.iou_bg = iou(a, b, MaskClass::kBackground);
  r.miou = (r.iou_fg + r.iou_bg) / 2.0;
  return r;
}

Evaluation evaluate_model(const Predictor& predict,
                          const std::vector<Sample>& samples,
                          double threshold) {
  Evaluation eval;
  for (const auto& s : samples) {
    if (!s.mask) {
      throw Error("evaluate_model: sample '" + s.sample_id + "' has no mask");
    }
  }
  double sum = 0.0;
  for (const auto& s : samples) {
    const BinaryMask pred = threshold_map(predict(s.image), threshold);
    const IoUReport r = miou(pred, *s.mask);
    eval.per_sample.push_back({s.sample_id, r});
    sum += r.miou;
  }
  if (!samples.empty()) eval.mean_miou = sum / static_cast<double>(samples.size());
  return eval;
}

void write_scores_csv(const Evaluation& eval,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "sample_id,iou_fg,iou_bg,miou\n";
  char buf[128];
  for (const auto& s : eval.per_sample) {
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f\n", s.report.iou_fg,
                  s.report.iou_bg, s.report.miou);
    out << s.sample_id << buf;
  }
}

}  // namespace fgsty
