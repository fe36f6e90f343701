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
#include <cstdio>
#include <fstream>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fgsty/pipeline.hpp"

namespace fgsty {
namespace {

struct Series {
  std::string label;
  std::vector<double> y;
  cv::Scalar color;
};

const cv::Scalar kPalette[] = {{200, 80, 30}, {40, 40, 210}, {40, 150, 40},
                               {150, 40, 150}, {20, 140, 200}, {90, 90, 90}};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Line chart; x is the sample index unless `xs` is given. NaN points break
// the line.
void plot_lines(const std::vector<Series>& series, const std::string& title,
                const std::filesystem::path& path,
                const std::vector<double>* xs = nullptr) {
  const int w = 560, h = 360, left = 60, right = 20, top = 36, bottom = 40;
  cv::Mat img(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  double lo = INFINITY, hi = -INFINITY;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double v : s.y) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  double x0 = 0.0, x1 = std::max<double>(1.0, static_cast<double>(n) - 1.0);
  if (xs != nullptr && !xs->empty()) {
    x0 = *std::min_element(xs->begin(), xs->end());
    x1 = *std::max_element(xs->begin(), xs->end());
    if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
  }
  auto px = [&](double x) {
    return left + static_cast<int>(std::lround((x - x0) / (x1 - x0) * (w - left - right)));
  };
  auto py = [&](double y) {
    return h - bottom - static_cast<int>(std::lround((y - lo) / (hi - lo) * (h - top - bottom)));
  };
  const cv::Scalar axis(60, 60, 60);
  cv::line(img, {left, top}, {left, h - bottom}, axis);
  cv::line(img, {left, h - bottom}, {w - right, h - bottom}, axis);
  cv::putText(img, title, {left, 22}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1, cv::LINE_AA);
  cv::putText(img, fmt(hi), {4, top + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1, cv::LINE_AA);
  cv::putText(img, fmt(lo), {4, h - bottom}, cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1, cv::LINE_AA);
  cv::putText(img, fmt(x0), {left, h - bottom + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1,
              cv::LINE_AA);
  cv::putText(img, fmt(x1), {w - right - 30, h - bottom + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
              axis, 1, cv::LINE_AA);
  int legend_y = top + 12;
  for (const auto& s : series) {
    std::vector<cv::Point> run;
    auto flush = [&] {
      if (run.size() > 1) cv::polylines(img, run, false, s.color, 2, cv::LINE_AA);
      if (run.size() == 1) cv::circle(img, run[0], 3, s.color, cv::FILLED);
      run.clear();
    };
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      const double x = xs != nullptr ? (*xs)[i] : static_cast<double>(i);
      run.emplace_back(px(x), py(s.y[i]));
    }
    flush();
    cv::line(img, {w - right - 150, legend_y - 4}, {w - right - 130, legend_y - 4}, s.color, 2);
    cv::putText(img, s.label, {w - right - 125, legend_y}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis,
                1, cv::LINE_AA);
    legend_y += 16;
  }
  if (!cv::imwrite(path.string(), img)) throw Error("cannot write " + path.string());
}

void plot_label_distribution(const LabelDistribution& d, const std::string& title,
                             const std::filesystem::path& path) {
  const int scale = std::max(1, 256 / std::max(1, d.width));
  const int mw = d.width * scale, mh = d.height * scale, band = 60, pad = 30;
  cv::Mat img(mh + band + pad, mw + band, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::Mat heat(d.height, d.width, CV_8UC1);
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      heat.at<unsigned char>(y, x) = static_cast<unsigned char>(
          std::lround(255.0 * d.mean_mask[static_cast<std::size_t>(y) * d.width + x]));
    }
  }
  cv::Mat big, colored;
  cv::resize(heat, big, {mw, mh}, 0, 0, cv::INTER_NEAREST);
  cv::applyColorMap(big, colored, cv::COLORMAP_VIRIDIS);
  colored.copyTo(img(cv::Rect(0, pad, mw, mh)));
  const double mx = std::max(
      *std::max_element(d.marginal_x.begin(), d.marginal_x.end()),
      *std::max_element(d.marginal_y.begin(), d.marginal_y.end()));
  const cv::Scalar ink(60, 60, 60);
  for (int x = 0; x < d.width && mx > 0; ++x) {
    const int len = static_cast<int>(std::lround(d.marginal_x[x] / mx * (band - 6)));
    cv::rectangle(img, {x * scale, pad + mh + 2}, {(x + 1) * scale - 1, pad + mh + 2 + len}, ink,
                  cv::FILLED);
  }
  for (int y = 0; y < d.height && mx > 0; ++y) {
    const int len = static_cast<int>(std::lround(d.marginal_y[y] / mx * (band - 6)));
    cv::rectangle(img, {mw + 2, pad + y * scale}, {mw + 2 + len, pad + (y + 1) * scale - 1}, ink,
                  cv::FILLED);
  }
  cv::putText(img, title, {4, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, ink, 1, cv::LINE_AA);
  if (!cv::imwrite(path.string(), img)) throw Error("cannot write " + path.string());
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')
               ? c
               : '_';
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

void emit_report(const std::vector<RunResult>& results, const std::filesystem::path& out,
                 const ReportExtras& extras) {
  std::error_code ec;
  std::filesystem::create_directories(out / "plots", ec);
  if (ec) throw Error("cannot create report directory " + out.string() + ": " + ec.message());

  nlohmann::json j = {{"runs", nlohmann::json::array()}};
  for (const auto& r : results) j["runs"].push_back(r);
  if (!extras.alpha_rows.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : extras.alpha_rows) {
      rows.push_back({{"alpha", r.alpha},
                      {"n_accepted", r.n_accepted},
                      {"mean_quality", std::isfinite(r.mean_quality) ? nlohmann::json(r.mean_quality)
                                                                      : nlohmann::json()},
                      {"mean_y1_quality", std::isfinite(r.mean_y1_quality)
                                              ? nlohmann::json(r.mean_y1_quality)
                                              : nlohmann::json()}});
    }
    j["alpha_sweep"] = rows;
  }
  {
    std::ofstream f(out / "results.json");
    if (!f) throw Error("cannot write " + (out / "results.json").string());
    f << j.dump(2) << '\n';
    if (!f) throw Error("short write on results.json");
  }

  std::set<std::string> targets;
  for (const auto& r : results) targets.insert(r.target_order.begin(), r.target_order.end());
  {
    std::ofstream f(out / "summary.csv");
    if (!f) throw Error("cannot write " + (out / "summary.csv").string());
    f << "run,variant,mode";
    for (const auto& t : targets) f << ',' << csv_field(t);
    f << ",average\n";
    f.precision(6);
    f << std::fixed;
    for (const auto& r : results) {
      f << csv_field(r.name) << ',' << to_string(r.variant) << ',' << to_string(r.mode);
      for (const auto& t : targets) {
        f << ',';
        auto it = r.per_target_miou.find(t);
        if (it != r.per_target_miou.end()) f << it->second;
      }
      f << ',' << r.average_miou << '\n';
    }
  }

  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (r.curves.empty()) continue;
    Series seg{"seg loss", {}, kPalette[0]}, cpl{"cpl loss", {}, kPalette[1]},
        adv{"adv loss", {}, kPalette[2]};
    bool has_cpl = false, has_adv = false;
    for (const auto& c : r.curves) {
      seg.y.push_back(c.seg_loss);
      cpl.y.push_back(c.n_accepted > 0 ? c.cpl_loss : NAN);
      adv.y.push_back(c.adv_loss > 0 ? c.adv_loss : NAN);
      has_cpl = has_cpl || c.n_accepted > 0;
      has_adv = has_adv || c.adv_loss > 0;
    }
    std::vector<Series> s = {seg};
    if (has_cpl) s.push_back(cpl);
    if (has_adv) s.push_back(adv);
    char idx[16];
    std::snprintf(idx, sizeof(idx), "%03zu", i);
    plot_lines(s, r.name + " (" + to_string(r.variant) + ") loss per epoch",
               out / "plots" / ("loss_" + std::string(idx) + "_" + safe_name(r.name) + ".png"));
  }

  if (!extras.alpha_rows.empty()) {
    std::vector<double> xs;
    Series counts{"accepted", {}, kPalette[0]};
    Series quality{"label mIoU", {}, kPalette[1]}, y1q{"y1 mIoU", {}, kPalette[2]};
    for (const auto& r : extras.alpha_rows) {
      xs.push_back(r.alpha);
      counts.y.push_back(r.n_accepted);
      quality.y.push_back(r.mean_quality);
      y1q.y.push_back(r.mean_y1_quality);
    }
    plot_lines({counts}, "pseudo-labels accepted vs alpha", out / "plots" / "alpha_counts.png",
               &xs);
    plot_lines({quality, y1q}, "accepted label quality vs alpha",
               out / "plots" / "alpha_quality.png", &xs);
  }
  for (const auto& [name, dist] : extras.label_distributions) {
    plot_label_distribution(dist, "mean mask " + name,
                            out / "plots" / ("labels_" + safe_name(name) + ".png"));
  }
}

}  // namespace fgsty
