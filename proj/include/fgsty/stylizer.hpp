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

#ifndef FGSTY_STYLIZER_HPP_
#define FGSTY_STYLIZER_HPP_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fgsty/core.hpp"
#include "fgsty/metrics.hpp"
#include "fgsty/rng.hpp"

namespace fgsty {

/// Second-order color statistics of one image region.
struct RegionStats {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  // Population covariance (denominator n).
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  std::size_t n_pixels = 0;
};

/// The requested region has no pixels.
class EmptyRegion : public Error {
 public:
  using Error::Error;
};

RegionStats region_stats(const Image& image, const BinaryMask& mask,
                         MaskClass region);
RegionStats image_stats(const Image& image);

using Rgb = Eigen::Vector3d;

/// Whitening-coloring transform of a pixel set:
///   out = Cs^{1/2} Cc^{-1/2} (p - mu_c) + mu_s
/// with symmetric matrix roots whose eigenvalues are clamped to >= epsilon.
/// Outputs are clipped to [0,1] unless `clip` is false.
void wct_transfer(std::span<Rgb> pixels, const RegionStats& content,
                  const RegionStats& style, double epsilon, bool clip = true);

/// The 3x3 linear part Cs^{1/2} Cc^{-1/2} of the transform.
Eigen::Matrix3d wct_matrix(const Eigen::Matrix3d& content_cov,
                           const Eigen::Matrix3d& style_cov, double epsilon);

/// Foreground and background of `source` are recolored independently with
/// the matching region statistics of `style`. An empty style region falls
/// back to the style image's whole-image statistics.
Image stylize_aligned(const Sample& source, const Sample& style,
                      double epsilon);

/// One whole-image transfer; masks are ignored.
Image stylize_unaligned(const Sample& source, const Sample& style,
                        double epsilon);

/// Image-level stylization backend. The closed-form WCT is the default; a
/// learned encoder/decoder can be plugged in behind the same interface.
class StyleBackend {
 public:
  virtual ~StyleBackend() = default;
  virtual Image stylize(const Sample& source, const Sample& style,
                        bool aligned) const = 0;
};

class WctBackend final : public StyleBackend {
 public:
  explicit WctBackend(double epsilon = 1e-5) : epsilon_(epsilon) {}
  Image stylize(const Sample& source, const Sample& style,
                bool aligned) const override;

 private:
  double epsilon_;
};

/// Labeled target images used as styles.
struct StylePool {
  std::vector<Sample> samples;
  std::map<std::string, std::vector<Sample>> per_domain;

  void add(const Sample& s);
  bool empty() const { return samples.empty(); }
};

/// Draws `n_per_domain` labeled samples (without replacement) from each
/// split's train part. Only train samples are eligible.
StylePool build_style_pool(const std::vector<const DatasetSplit*>& targets,
                           int n_per_domain, const Rng& rng);

struct StyleManifestEntry {
  std::string source_id;
  std::string style_id;
  std::string style_domain;
};

struct StyleAdapted {
  DatasetSplit dataset;
  std::vector<StyleManifestEntry> manifest;
};

/// Stylizes every source train sample with a style drawn uniformly from the
/// pool; labels are copied unchanged. Sample i uses substream i of `rng`.
StyleAdapted build_style_adapted_dataset(const DatasetSplit& source,
                                         const StylePool& pool, const Rng& rng,
                                         const StyleBackend& backend,
                                         bool aligned = true);

enum class NormMethod { kGray, kHistEq, kFdm, kHistMatch };

NormMethod parse_norm_method(const std::string& name);
std::string to_string(NormMethod m);
bool needs_reference(NormMethod m);

/// Image normalization baselines.
///   gray:       luminance (0.299, 0.587, 0.114) replicated to 3 channels
///   hist_eq:    per-channel CDF equalization over 256 bins
///   fdm:        per-channel mean/std matched to `reference`
///   hist_match: per-channel quantile mapping onto `reference`
Image normalize_baseline(const Image& image, NormMethod method,
                         const Image* reference = nullptr);

}  // namespace fgsty

#endif  // FGSTY_STYLIZER_HPP_
