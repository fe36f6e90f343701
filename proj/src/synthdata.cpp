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

#include "fgsty/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fgsty/rng.hpp"

namespace fgsty {
namespace {

constexpr double kPi = 3.14159265358979323846;

struct Ellipse {
  double cx, cy, rx, ry, theta;
};

// A hand at unit scale: ellipse offsets and radii are multiplied by the
// scale found during area fitting, about the hand center.
struct HandShape {
  double cx, cy;
  std::vector<Ellipse> parts;  // relative to (cx, cy), unit scale
};

std::string pattern_name(BgPattern p) {
  switch (p) {
    case BgPattern::kGradient: return "gradient";
    case BgPattern::kChecker: return "checker";
    case BgPattern::kBlobs: return "blobs";
  }
  return "?";
}

BgPattern parse_pattern(const std::string& s) {
  if (s == "gradient") return BgPattern::kGradient;
  if (s == "checker") return BgPattern::kChecker;
  if (s == "blobs") return BgPattern::kBlobs;
  throw Error("unknown bg_pattern '" + s + "'");
}

int uniform_int(Rng& rng, std::pair<int, int> r) {
  return r.first + static_cast<int>(rng.index(static_cast<std::uint64_t>(r.second - r.first + 1)));
}

HandShape draw_hand(const DomainRecipe& r, Rng& rng) {
  HandShape h;
  const double res = r.resolution;
  // Correlated 2D normal for the center via Cholesky of the covariance.
  const double a = r.label_position_cov[0], b = r.label_position_cov[1],
               d = r.label_position_cov[3];
  const double l11 = std::sqrt(std::max(a, 0.0));
  const double l21 = l11 > 0 ? b / l11 : 0.0;
  const double l22 = std::sqrt(std::max(d - l21 * l21, 0.0));
  const double z1 = rng.normal(), z2 = rng.normal();
  const double fx = std::clamp(r.label_position_mean[0] + l11 * z1, 0.08, 0.92);
  const double fy = std::clamp(r.label_position_mean[1] + l21 * z1 + l22 * z2, 0.08, 0.92);
  h.cx = fx * res;
  h.cy = fy * res;
  const int n = uniform_int(rng, r.n_blobs_range);
  const double palm_theta = rng.uniform(0.0, kPi);
  h.parts.push_back({0.0, 0.0, rng.uniform(0.9, 1.2), rng.uniform(0.65, 0.95),
                     palm_theta});
  for (int k = 1; k < n; ++k) {
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    const double dist = rng.uniform(0.7, 1.1);
    h.parts.push_back({dist * std::cos(phi), dist * std::sin(phi),
                       rng.uniform(0.22, 0.35), rng.uniform(0.55, 0.9), phi});
  }
  return h;
}

void rasterize(const std::vector<HandShape>& hands, double scale, int res,
               BinaryMask& mask) {
  std::fill(mask.data.begin(), mask.data.end(), 0);
  for (const auto& h : hands) {
    for (const auto& e : h.parts) {
      const double cx = h.cx + e.cx * scale, cy = h.cy + e.cy * scale;
      const double rx = e.rx * scale, ry = e.ry * scale;
      const double c = std::cos(e.theta), s = std::sin(e.theta);
      const double reach = std::max(rx, ry);
      const int y0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
      const int y1 = std::min(res - 1, static_cast<int>(std::ceil(cy + reach)));
      const int x0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
      const int x1 = std::min(res - 1, static_cast<int>(std::ceil(cx + reach)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double u = (dx * c + dy * s) / rx;
          const double v = (-dx * s + dy * c) / ry;
          if (u * u + v * v <= 1.0) mask.set(y, x, true);
        }
      }
    }
  }
}

BinaryMask fit_shape(const DomainRecipe& r, Rng& rng) {
  const int res = r.resolution;
  const double total = static_cast<double>(res) * res;
  BinaryMask mask(res, res);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double target = rng.uniform(r.fg_area_range.first, r.fg_area_range.second);
    const int n_hands = uniform_int(rng, r.n_hands_range);
    std::vector<HandShape> hands;
    for (int k = 0; k < n_hands; ++k) hands.push_back(draw_hand(r, rng));
    double lo = 0.0, hi = res;
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (lo + hi);
      rasterize(hands, mid, res, mask);
      if (static_cast<double>(mask.count()) / total < target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    // Take whichever bracket end lands inside the area range.
    for (double s : {hi, lo}) {
      rasterize(hands, s, res, mask);
      const double frac = static_cast<double>(mask.count()) / total;
      if (frac >= r.fg_area_range.first && frac <= r.fg_area_range.second) {
        return mask;
      }
    }
  }
  throw Error("generate_domain: recipe '" + r.domain_id +
              "' cannot reach its fg_area_range at resolution " +
              std::to_string(res));
}

Color lerp(const Color& a, const Color& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t,
          a[2] + (b[2] - a[2]) * t};
}

std::vector<Color> render_background(const DomainRecipe& r, Rng& rng) {
  const int res = r.resolution;
  const double unit = res / 64.0;
  const auto& pal = r.bg_palette;
  std::vector<Color> bg(static_cast<std::size_t>(res) * res);
  const std::size_t k = pal.size();
  switch (r.bg_pattern) {
    case BgPattern::kGradient: {
      const double ang = rng.uniform(0.0, 2.0 * kPi);
      const std::size_t i = rng.index(k);
      const std::size_t j = (i + 1 + rng.index(k - 1)) % k;
      const double dx = std::cos(ang), dy = std::sin(ang);
      for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
          const double t = 0.5 + ((x + 0.5) / res - 0.5) * dx + ((y + 0.5) / res - 0.5) * dy;
          bg[static_cast<std::size_t>(y) * res + x] = lerp(pal[i], pal[j], std::clamp(t, 0.0, 1.0));
        }
      }
      break;
    }
    case BgPattern::kChecker: {
      const int cell = std::max(2, static_cast<int>(std::lround(rng.uniform(6.0, 12.0) * unit)));
      const int ox = static_cast<int>(rng.index(static_cast<std::uint64_t>(cell)));
      const int oy = static_cast<int>(rng.index(static_cast<std::uint64_t>(cell)));
      const std::size_t shift = rng.index(k);
      for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
          const std::size_t c = ((x + ox) / cell + (y + oy) / cell + shift) % k;
          bg[static_cast<std::size_t>(y) * res + x] = pal[c];
        }
      }
      break;
    }
    case BgPattern::kBlobs: {
      const Color base = pal[rng.index(k)];
      std::fill(bg.begin(), bg.end(), base);
      const int n = 6 + static_cast<int>(rng.index(5));
      for (int b = 0; b < n; ++b) {
        const Color col = pal[rng.index(k)];
        const double cx = rng.uniform(0.0, res), cy = rng.uniform(0.0, res);
        const double rad = rng.uniform(4.0, 14.0) * unit;
        for (int y = 0; y < res; ++y) {
          for (int x = 0; x < res; ++x) {
            const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
            const double w = std::clamp(rad + 1.0 - d, 0.0, 1.0);
            if (w > 0) {
              auto& px = bg[static_cast<std::size_t>(y) * res + x];
              px = lerp(px, col, w);
            }
          }
        }
      }
      break;
    }
  }
  for (auto& px : bg) {
    const double shared = rng.normal(0.0, r.bg_texture_noise);
    for (int c = 0; c < 3; ++c) {
      px[c] += shared + rng.normal(0.0, r.bg_texture_noise * 0.3);
    }
  }
  return bg;
}

std::vector<Color> render_foreground(const DomainRecipe& r, Rng& rng) {
  const int res = r.resolution;
  const double hue = r.fg_hue + rng.uniform(-0.015, 0.015);
  const double sat = rng.uniform(r.fg_saturation.first, r.fg_saturation.second);
  const double val = rng.uniform(r.fg_value.first, r.fg_value.second);
  const double ang = rng.uniform(0.0, 2.0 * kPi);
  const double lx = std::cos(ang), ly = std::sin(ang);
  std::vector<Color> fg(static_cast<std::size_t>(res) * res);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double shade = 1.0 + 0.12 * (((x + 0.5) / res - 0.5) * lx +
                                         ((y + 0.5) / res - 0.5) * ly);
      Color c = hsv_to_rgb(hue - std::floor(hue), sat, std::clamp(val * shade, 0.0, 1.0));
      const double shared = rng.normal(0.0, r.fg_texture_noise);
      for (int ch = 0; ch < 3; ++ch) {
        c[ch] += shared + rng.normal(0.0, r.fg_texture_noise * 0.3);
      }
      fg[static_cast<std::size_t>(y) * res + x] = c;
    }
  }
  return fg;
}

Sample render_sample(const DomainRecipe& r, const Rng& stream,
                     const std::string& id) {
  Rng shape_rng = stream.substream("shape");
  Rng fg_rng = stream.substream("fg");
  Rng bg_rng = stream.substream("bg");
  const int res = r.resolution;
  BinaryMask mask = fit_shape(r, shape_rng);
  const auto fg = render_foreground(r, fg_rng);
  const auto bg = render_background(r, bg_rng);

  Sample s;
  s.domain_id = r.domain_id;
  s.sample_id = id;
  s.image = Image(res, res);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * res + x;
      Color c;
      if (mask.data[i]) {
        c = fg[i];
      } else {
        // Background pixels touching the hand take a share of its color.
        int hits = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy >= 0 && yy < res && xx >= 0 && xx < res && mask.at(yy, xx)) ++hits;
          }
        }
        c = lerp(bg[i], fg[i], hits / 9.0);
      }
      for (int ch = 0; ch < 3; ++ch) {
        s.image.at(y, x, ch) =
            static_cast<float>(std::clamp(c[ch] * r.lighting_gain, 0.0, 1.0));
      }
    }
  }
  s.mask = std::move(mask);
  return s;
}

std::string sample_name(const std::string& domain, const char* part, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", i);
  return domain + "-" + part + "-" + buf;
}

}  // namespace

Color hsv_to_rgb(double h, double s, double v) {
  const double hh = (h - std::floor(h)) * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

double rgb_hue(const Color& c) {
  const double mx = std::max({c[0], c[1], c[2]});
  const double mn = std::min({c[0], c[1], c[2]});
  const double d = mx - mn;
  if (d <= 0.0) return 0.0;
  double h;
  if (mx == c[0]) {
    h = (c[1] - c[2]) / d;
  } else if (mx == c[1]) {
    h = 2.0 + (c[2] - c[0]) / d;
  } else {
    h = 4.0 + (c[0] - c[1]) / d;
  }
  h /= 6.0;
  return h - std::floor(h);
}

void DomainRecipe::validate() const {
  auto fail = [&](const std::string& m) {
    throw Error("recipe '" + domain_id + "': " + m);
  };
  if (!(fg_hue >= 0.0 && fg_hue < 1.0)) fail("fg_hue must be in [0,1)");
  auto check_unit = [&](const Range& r, const char* name) {
    if (!(r.first >= 0.0 && r.first < r.second && r.second <= 1.0)) {
      fail(std::string(name) + " must satisfy 0 <= lo < hi <= 1");
    }
  };
  check_unit(fg_saturation, "fg_saturation");
  check_unit(fg_value, "fg_value");
  if (!(fg_area_range.first > 0.0 && fg_area_range.first < fg_area_range.second &&
        fg_area_range.second < 0.5)) {
    fail("fg_area_range must satisfy 0 < lo < hi < 0.5");
  }
  if (bg_palette.size() < 2 || bg_palette.size() > 4) fail("bg_palette needs 2-4 colors");
  if (fg_texture_noise < 0.0 || bg_texture_noise < 0.0) fail("noise must be >= 0");
  if (!(lighting_gain > 0.0)) fail("lighting_gain must be > 0");
  if (n_blobs_range.first < 1 || n_blobs_range.first > n_blobs_range.second) {
    fail("n_blobs_range must satisfy 1 <= lo <= hi");
  }
  if (n_hands_range.first < 1 || n_hands_range.first > n_hands_range.second) {
    fail("n_hands_range must satisfy 1 <= lo <= hi");
  }
  if (label_position_cov[0] < 0.0 || label_position_cov[3] < 0.0) {
    fail("label_position_cov must be positive semi-definite");
  }
  if (resolution < 8) fail("resolution must be >= 8");
  const double pixels = static_cast<double>(resolution) * resolution;
  if ((fg_area_range.second - fg_area_range.first) * pixels < 1.0 ||
      fg_area_range.second * pixels < 1.0) {
    fail("fg_area_range is narrower than one pixel at this resolution");
  }
}

void to_json(nlohmann::json& j, const DomainRecipe& r) {
  j = nlohmann::json{{"domain_id", r.domain_id},
                     {"fg_hue", r.fg_hue},
                     {"fg_saturation", r.fg_saturation},
                     {"fg_value", r.fg_value},
                     {"fg_texture_noise", r.fg_texture_noise},
                     {"bg_palette", r.bg_palette},
                     {"bg_pattern", pattern_name(r.bg_pattern)},
                     {"bg_texture_noise", r.bg_texture_noise},
                     {"lighting_gain", r.lighting_gain},
                     {"label_position_mean", r.label_position_mean},
                     {"label_position_cov", r.label_position_cov},
                     {"fg_area_range", r.fg_area_range},
                     {"n_blobs_range", r.n_blobs_range},
                     {"n_hands_range", r.n_hands_range},
                     {"resolution", r.resolution}};
}

void from_json(const nlohmann::json& j, DomainRecipe& r) {
  r.domain_id = j.at("domain_id").get<std::string>();
  r.fg_hue = j.at("fg_hue").get<double>();
  r.fg_saturation = j.at("fg_saturation").get<Range>();
  r.fg_value = j.at("fg_value").get<Range>();
  r.fg_texture_noise = j.at("fg_texture_noise").get<double>();
  r.bg_palette = j.at("bg_palette").get<std::vector<Color>>();
  r.bg_pattern = parse_pattern(j.at("bg_pattern").get<std::string>());
  r.bg_texture_noise = j.at("bg_texture_noise").get<double>();
  r.lighting_gain = j.at("lighting_gain").get<double>();
  r.label_position_mean = j.at("label_position_mean").get<std::array<double, 2>>();
  r.label_position_cov = j.at("label_position_cov").get<std::array<double, 4>>();
  r.fg_area_range = j.at("fg_area_range").get<Range>();
  r.n_blobs_range = j.at("n_blobs_range").get<std::pair<int, int>>();
  r.n_hands_range = j.at("n_hands_range").get<std::pair<int, int>>();
  r.resolution = j.at("resolution").get<int>();
}

DatasetSplit generate_domain(const DomainRecipe& recipe, int n_train,
                             int n_test, std::uint64_t seed) {
  if (n_train <= 0 || n_test <= 0) {
    throw Error("generate_domain: n_train and n_test must be positive");
  }
  recipe.validate();
  const Rng base = seeded_rng(seed).substream(recipe.domain_id);
  DatasetSplit split;
  split.domain_id = recipe.domain_id;
  const Rng train_rng = base.substream("train");
  const Rng test_rng = base.substream("test");
  for (int i = 0; i < n_train; ++i) {
    split.train.push_back(render_sample(recipe, train_rng.substream(static_cast<std::uint64_t>(i)),
                                        sample_name(recipe.domain_id, "train", i)));
  }
  for (int i = 0; i < n_test; ++i) {
    split.test.push_back(render_sample(recipe, test_rng.substream(static_cast<std::uint64_t>(i)),
                                       sample_name(recipe.domain_id, "test", i)));
  }
  return split;
}

std::vector<DomainRecipe> preset_recipes(int resolution) {
  DomainRecipe s;
  s.domain_id = "S";
  s.fg_hue = 0.06;
  s.fg_saturation = {0.45, 0.6};
  s.fg_value = {0.75, 0.9};
  s.fg_texture_noise = 0.03;
  s.bg_palette = {{0.22, 0.32, 0.52}, {0.30, 0.50, 0.36}, {0.45, 0.46, 0.52}};
  s.bg_pattern = BgPattern::kChecker;
  s.bg_texture_noise = 0.03;
  s.lighting_gain = 1.0;
  s.label_position_mean = {0.5, 0.68};
  s.label_position_cov = {0.02, 0.0, 0.0, 0.006};
  s.fg_area_range = {0.08, 0.25};
  s.resolution = resolution;

  // T1: mild color shift.
  DomainRecipe t1 = s;
  t1.domain_id = "T1";
  t1.fg_hue = 0.09;
  t1.fg_saturation = {0.35, 0.5};
  t1.bg_palette = {{0.28, 0.32, 0.46}, {0.36, 0.46, 0.30}, {0.52, 0.50, 0.46}};
  t1.bg_pattern = BgPattern::kGradient;

  // T2: dim lighting over a warm background.
  DomainRecipe t2 = s;
  t2.domain_id = "T2";
  t2.fg_hue = 0.05;
  t2.lighting_gain = 0.55;
  t2.bg_palette = {{0.70, 0.52, 0.38}, {0.40, 0.42, 0.46}, {0.62, 0.60, 0.55}};
  t2.bg_pattern = BgPattern::kBlobs;

  // T3: strong hue and texture shift (gloved hands on skin-toned surfaces).
  DomainRecipe t3 = s;
  t3.domain_id = "T3";
  t3.fg_hue = 0.58;
  t3.fg_saturation = {0.35, 0.55};
  t3.fg_value = {0.55, 0.75};
  t3.fg_texture_noise = 0.07;
  t3.bg_palette = {{0.85, 0.62, 0.48}, {0.70, 0.55, 0.42}, {0.50, 0.38, 0.30}};
  t3.bg_pattern = BgPattern::kBlobs;
  t3.bg_texture_noise = 0.02;

  // T4: strong shift plus hands displaced toward the upper left.
  DomainRecipe t4 = s;
  t4.domain_id = "T4";
  t4.fg_hue = 0.33;
  t4.fg_saturation = {0.30, 0.45};
  t4.fg_value = {0.60, 0.80};
  t4.fg_texture_noise = 0.05;
  t4.bg_palette = {{0.78, 0.58, 0.45}, {0.30, 0.26, 0.40}, {0.60, 0.40, 0.35}};
  t4.bg_pattern = BgPattern::kGradient;
  t4.lighting_gain = 0.8;
  t4.label_position_mean = {0.32, 0.35};
  t4.label_position_cov = {0.01, 0.0, 0.0, 0.01};

  return {s, t1, t2, t3, t4};
}

PresetSuite preset_suite(std::uint64_t seed, int n_train, int n_test,
                         int resolution) {
  PresetSuite suite;
  auto recipes = preset_recipes(resolution);
  suite.source_recipe = recipes.front();
  suite.source = generate_domain(recipes.front(), n_train, n_test, seed);
  for (std::size_t i = 1; i < recipes.size(); ++i) {
    suite.targets.push_back(generate_domain(recipes[i], n_train, n_test, seed));
    suite.target_recipes.push_back(recipes[i]);
  }
  return suite;
}

LabelDistribution label_distribution_summary(const std::vector<Sample>& samples) {
  if (samples.empty()) throw Error("label_distribution_summary: no samples");
  LabelDistribution d;
  d.height = samples.front().image.height;
  d.width = samples.front().image.width;
  d.mean_mask.assign(static_cast<std::size_t>(d.height) * d.width, 0.0);
  for (const auto& s : samples) {
    if (!s.mask) {
      throw Error("label_distribution_summary: sample '" + s.sample_id +
                  "' has no mask");
    }
    if (s.mask->height != d.height || s.mask->width != d.width) {
      throw DimensionMismatch("label_distribution_summary: mixed sizes");
    }
    for (std::size_t i = 0; i < d.mean_mask.size(); ++i) {
      d.mean_mask[i] += s.mask->data[i] ? 1.0 : 0.0;
    }
  }
  for (double& v : d.mean_mask) v /= static_cast<double>(samples.size());
  d.marginal_x.assign(static_cast<std::size_t>(d.width), 0.0);
  d.marginal_y.assign(static_cast<std::size_t>(d.height), 0.0);
  double total = 0.0;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const double v = d.mean_mask[static_cast<std::size_t>(y) * d.width + x];
      d.marginal_x[x] += v;
      d.marginal_y[y] += v;
      total += v;
    }
  }
  if (total > 0.0) {
    for (double& v : d.marginal_x) v /= total;
    for (double& v : d.marginal_y) v /= total;
  }
  return d;
}

std::array<double, 2> LabelDistribution::centroid() const {
  double cx = 0.0, cy = 0.0;
  for (int x = 0; x < width; ++x) cx += marginal_x[x] * (x + 0.5);
  for (int y = 0; y < height; ++y) cy += marginal_y[y] * (y + 0.5);
  return {cx, cy};
}

}  // namespace fgsty
