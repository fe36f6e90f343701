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

#include "fgsty/stylizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "fgsty/log.hpp"

namespace fgsty {
namespace {

bool in_region(const BinaryMask& mask, std::size_t i, MaskClass region) {
  const bool fg = mask.data[i] != 0;
  return region == MaskClass::kForeground ? fg : !fg;
}

Rgb pixel(const Image& img, std::size_t i) {
  return Rgb(img.data[i * 3], img.data[i * 3 + 1], img.data[i * 3 + 2]);
}

template <typename Pred>
RegionStats stats_where(const Image& image, Pred&& include) {
  RegionStats s;
  const std::size_t n = image.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (!include(i)) continue;
    s.mean += pixel(image, i);
    ++s.n_pixels;
  }
  if (s.n_pixels == 0) return s;
  s.mean /= static_cast<double>(s.n_pixels);
  for (std::size_t i = 0; i < n; ++i) {
    if (!include(i)) continue;
    const Rgb d = pixel(image, i) - s.mean;
    s.cov += d * d.transpose();
  }
  s.cov /= static_cast<double>(s.n_pixels);
  return s;
}

bool finite(const RegionStats& s) {
  return s.mean.allFinite() && s.cov.allFinite();
}

// Symmetric power of a covariance with eigenvalues clamped at epsilon.
Eigen::Matrix3d clamped_power(const Eigen::Matrix3d& cov, double epsilon,
                              double power) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d values = eig.eigenvalues();
  for (int i = 0; i < 3; ++i) {
    values[i] = std::pow(std::max(values[i], epsilon), power);
  }
  return eig.eigenvectors() * values.asDiagonal() *
         eig.eigenvectors().transpose();
}

void transfer_region(const Image& source, const BinaryMask* mask,
                     MaskClass region, const RegionStats& content,
                     const RegionStats& style, double epsilon, Image& out) {
  const Eigen::Matrix3d t = wct_matrix(content.cov, style.cov, epsilon);
  const std::size_t n = source.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (mask != nullptr && !in_region(*mask, i, region)) continue;
    const Rgb o = t * (pixel(source, i) - content.mean) + style.mean;
    for (int c = 0; c < 3; ++c) {
      out.data[i * 3 + c] = static_cast<float>(std::clamp(o[c], 0.0, 1.0));
    }
  }
}

}  // namespace

RegionStats region_stats(const Image& image, const BinaryMask& mask,
                         MaskClass region) {
  require_same_size(image, mask, "region_stats");
  RegionStats s = stats_where(
      image, [&](std::size_t i) { return in_region(mask, i, region); });
  if (s.n_pixels == 0) {
    throw EmptyRegion(std::string("region_stats: empty ") +
                      (region == MaskClass::kForeground ? "foreground"
                                                        : "background"));
  }
  return s;
}

RegionStats image_stats(const Image& image) {
  if (image.pixel_count() == 0) throw EmptyRegion("image_stats: empty image");
  return stats_where(image, [](std::size_t) { return true; });
}

Eigen::Matrix3d wct_matrix(const Eigen::Matrix3d& content_cov,
                           const Eigen::Matrix3d& style_cov, double epsilon) {
  if (!(epsilon > 0.0)) throw Error("wct: epsilon must be > 0");
  return clamped_power(style_cov, epsilon, 0.5) *
         clamped_power(content_cov, epsilon, -0.5);
}

void wct_transfer(std::span<Rgb> pixels, const RegionStats& content,
                  const RegionStats& style, double epsilon, bool clip) {
  if (!finite(content) || !finite(style)) {
    throw Error("wct_transfer: non-finite region statistics");
  }
  const Eigen::Matrix3d t = wct_matrix(content.cov, style.cov, epsilon);
  for (Rgb& p : pixels) {
    p = t * (p - content.mean) + style.mean;
    if (clip) p = p.cwiseMax(0.0).cwiseMin(1.0);
  }
}

Image stylize_aligned(const Sample& source, const Sample& style,
                      double epsilon) {
  if (!source.mask || !style.mask) {
    throw Error("stylize_aligned: source and style must both have masks");
  }
  Image out = source.image;
  for (MaskClass region : {MaskClass::kForeground, MaskClass::kBackground}) {
    RegionStats content;
    try {
      content = region_stats(source.image, *source.mask, region);
    } catch (const EmptyRegion&) {
      continue;  // nothing of this region to recolor
    }
    RegionStats target;
    try {
      target = region_stats(style.image, *style.mask, region);
    } catch (const EmptyRegion&) {
      log_warning("style '" + style.sample_id + "' has an empty " +
                  (region == MaskClass::kForeground ? "foreground" :
                                                      "background") +
                  "; using whole-image statistics");
      target = image_stats(style.image);
    }
    if (!finite(content) || !finite(target)) {
      throw Error("stylize_aligned: non-finite region statistics");
    }
    transfer_region(source.image, &*source.mask, region, content, target,
                    epsilon, out);
  }
  return out;
}

Image stylize_unaligned(const Sample& source, const Sample& style,
                        double epsilon) {
  const RegionStats content = image_stats(source.image);
  const RegionStats target = image_stats(style.image);
  if (!finite(content) || !finite(target)) {
    throw Error("stylize_unaligned: non-finite image statistics");
  }
  Image out = source.image;
  transfer_region(source.image, nullptr, MaskClass::kForeground, content,
                  target, epsilon, out);
  return out;
}

Image WctBackend::stylize(const Sample& source, const Sample& style,
                          bool aligned) const {
  return aligned ? stylize_aligned(source, style, epsilon_)
                 : stylize_unaligned(source, style, epsilon_);
}

void StylePool::add(const Sample& s) {
  if (!s.mask) {
    throw Error("style pool: sample '" + s.sample_id + "' has no mask");
  }
  samples.push_back(s);
  per_domain[s.domain_id].push_back(s);
}

StylePool build_style_pool(const std::vector<const DatasetSplit*>& targets,
                           int n_per_domain, const Rng& rng) {
  StylePool pool;
  for (const DatasetSplit* split : targets) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split->train.size(); ++i) {
      if (split->train[i].mask) idx.push_back(i);
    }
    if (idx.empty()) {
      throw Error("style pool: domain '" + split->domain_id +
                  "' has no labeled train samples");
    }
    Rng r = rng.substream(split->domain_id);
    r.shuffle(idx);
    const std::size_t take =
        std::min<std::size_t>(idx.size(), static_cast<std::size_t>(n_per_domain));
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    for (std::size_t k = 0; k < take; ++k) pool.add(split->train[idx[k]]);
  }
  return pool;
}

StyleAdapted build_style_adapted_dataset(const DatasetSplit& source,
                                         const StylePool& pool, const Rng& rng,
                                         const StyleBackend& backend,
                                         bool aligned) {
  if (pool.empty()) throw Error("build_style_adapted_dataset: empty style pool");
  StyleAdapted result;
  result.dataset.domain_id = source.domain_id + "+ss";
  result.dataset.train.reserve(source.train.size());
  for (std::size_t i = 0; i < source.train.size(); ++i) {
    const Sample& src = source.train[i];
    if (aligned && !src.mask) {
      throw Error("build_style_adapted_dataset: source sample '" +
                  src.sample_id + "' has no mask");
    }
    Rng r = rng.substream(static_cast<std::uint64_t>(i));
    const Sample& style = pool.samples[r.index(pool.samples.size())];
    Sample out;
    out.image = backend.stylize(src, style, aligned);
    out.mask = src.mask;
    out.domain_id = result.dataset.domain_id;
    out.sample_id = src.sample_id;
    result.dataset.train.push_back(std::move(out));
    result.manifest.push_back({src.sample_id, style.sample_id, style.domain_id});
  }
  return result;
}

NormMethod parse_norm_method(const std::string& name) {
  if (name == "gray") return NormMethod::kGray;
  if (name == "hist_eq") return NormMethod::kHistEq;
  if (name == "fdm") return NormMethod::kFdm;
  if (name == "hist_match") return NormMethod::kHistMatch;
  throw Error("unknown normalization method '" + name + "'");
}

std::string to_string(NormMethod m) {
  switch (m) {
    case NormMethod::kGray: return "gray";
    case NormMethod::kHistEq: return "hist_eq";
    case NormMethod::kFdm: return "fdm";
    case NormMethod::kHistMatch: return "hist_match";
  }
  return "?";
}

bool needs_reference(NormMethod m) {
  return m == NormMethod::kFdm || m == NormMethod::kHistMatch;
}

namespace {

Image to_gray(const Image& in) {
  Image out(in.height, in.width);
  const std::size_t n = in.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double l = 0.299 * in.data[i * 3] + 0.587 * in.data[i * 3 + 1] +
                     0.114 * in.data[i * 3 + 2];
    const float v = static_cast<float>(std::clamp(l, 0.0, 1.0));
    out.data[i * 3] = out.data[i * 3 + 1] = out.data[i * 3 + 2] = v;
  }
  return out;
}

int to_bin(float v) {
  return std::clamp(static_cast<int>(std::lround(v * 255.0f)), 0, 255);
}

Image equalize(const Image& in) {
  Image out = in;
  const std::size_t n = in.pixel_count();
  for (int c = 0; c < 3; ++c) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = 0; i < n; ++i) ++hist[to_bin(in.data[i * 3 + c])];
    std::array<std::size_t, 256> cdf{};
    std::partial_sum(hist.begin(), hist.end(), cdf.begin());
    std::size_t cdf_min = 0;
    for (std::size_t h : cdf) {
      if (h > 0) {
        cdf_min = h;
        break;
      }
    }
    if (cdf_min == n) continue;  // constant channel
    const double denom = static_cast<double>(n - cdf_min);
    for (std::size_t i = 0; i < n; ++i) {
      const int b = to_bin(in.data[i * 3 + c]);
      out.data[i * 3 + c] = static_cast<float>(
          static_cast<double>(cdf[b] - cdf_min) / denom);
    }
  }
  return out;
}

Image match_moments(const Image& in, const Image& ref) {
  Image out = in;
  const std::size_t n = in.pixel_count();
  const std::size_t m = ref.pixel_count();
  for (int c = 0; c < 3; ++c) {
    double mu = 0, var = 0, mu_r = 0, var_r = 0;
    for (std::size_t i = 0; i < n; ++i) mu += in.data[i * 3 + c];
    mu /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = in.data[i * 3 + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) mu_r += ref.data[i * 3 + c];
    mu_r /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double d = ref.data[i * 3 + c] - mu_r;
      var_r += d * d;
    }
    var_r /= static_cast<double>(m);
    const double sd = std::sqrt(var);
    const double sd_r = std::sqrt(var_r);
    double scale = sd > 1e-12 ? sd_r / sd : 0.0;
    double shift = mu_r;
    // Clipping to [0,1] pulls the moments off target; re-fit the affine map
    // on the clipped output until they match.
    for (int iter = 0; iter < 50; ++iter) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v =
            std::clamp((in.data[i * 3 + c] - mu) * scale + shift, 0.0, 1.0);
        out.data[i * 3 + c] = static_cast<float>(v);
        s += v;
        s2 += v * v;
      }
      const double mo = s / static_cast<double>(n);
      const double so = std::sqrt(std::max(0.0, s2 / static_cast<double>(n) - mo * mo));
      if (std::abs(mo - mu_r) < 1e-7 && std::abs(so - sd_r) < 1e-7) break;
      shift += mu_r - mo;
      if (so > 1e-12) scale *= sd_r / so;
    }
  }
  return out;
}

Image match_histogram(const Image& in, const Image& ref) {
  Image out = in;
  const std::size_t n = in.pixel_count();
  const std::size_t m = ref.pixel_count();
  std::vector<std::size_t> order(n);
  std::vector<float> ref_sorted(m);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < m; ++i) ref_sorted[i] = ref.data[i * 3 + c];
    std::sort(ref_sorted.begin(), ref_sorted.end());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return in.data[a * 3 + c] < in.data[b * 3 + c];
    });
    // Tied inputs share the quantile of their mid-rank.
    std::size_t start = 0;
    while (start < n) {
      std::size_t end = start + 1;
      const float v = in.data[order[start] * 3 + c];
      while (end < n && in.data[order[end] * 3 + c] == v) ++end;
      const double q = (0.5 * static_cast<double>(start + end - 1) + 0.5) /
                       static_cast<double>(n);
      const double pos = q * static_cast<double>(m) - 0.5;
      const double lo = std::clamp(std::floor(pos), 0.0, static_cast<double>(m - 1));
      const double hi = std::min(lo + 1.0, static_cast<double>(m - 1));
      const double f = std::clamp(pos - lo, 0.0, 1.0);
      const float mapped = static_cast<float>(
          (1.0 - f) * ref_sorted[static_cast<std::size_t>(lo)] +
          f * ref_sorted[static_cast<std::size_t>(hi)]);
      for (std::size_t k = start; k < end; ++k) {
        out.data[order[k] * 3 + c] = mapped;
      }
      start = end;
    }
  }
  return out;
}

}  // namespace

Image normalize_baseline(const Image& image, NormMethod method,
                         const Image* reference) {
  if (needs_reference(method) && (reference == nullptr || reference->empty())) {
    throw Error("normalize_baseline: " + to_string(method) +
                " requires a reference image");
  }
  switch (method) {
    case NormMethod::kGray: return to_gray(image);
    case NormMethod::kHistEq: return equalize(image);
    case NormMethod::kFdm: return match_moments(image, *reference);
    case NormMethod::kHistMatch: return match_histogram(image, *reference);
  }
  throw Error("normalize_baseline: unknown method");
}

}  // namespace fgsty
