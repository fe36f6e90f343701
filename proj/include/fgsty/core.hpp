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

#ifndef FGSTY_CORE_HPP_
#define FGSTY_CORE_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgsty {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when two grids that must agree in size do not.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Dense RGB image, values in [0,1], stored row-major with interleaved
/// channels: data[(y * width + x) * 3 + c].
struct Image {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w),
        data(static_cast<std::size_t>(h) * w * kChannels, fill) {}

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }
  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  bool empty() const { return data.empty(); }

  /// True when every value is finite and inside [0,1].
  bool valid() const;

  bool operator==(const Image&) const = default;
};

/// Boolean grid; true marks foreground.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w, bool fill = false)
      : height(h), width(w),
        data(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }
  bool at(int y, int x) const {
    return data[static_cast<std::size_t>(y) * width + x] != 0;
  }
  void set(int y, int x, bool v) {
    data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  std::size_t count() const;

  bool operator==(const BinaryMask&) const = default;
};

/// Per-pixel foreground probability.
struct ProbMap {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  ProbMap() = default;
  ProbMap(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height) * width;
  }
  float at(int y, int x) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }

  bool operator==(const ProbMap&) const = default;
};

struct Sample {
  Image image;
  std::optional<BinaryMask> mask;
  std::string domain_id;
  std::string sample_id;

  bool labeled() const { return mask.has_value(); }
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::string domain_id;
};

/// Thresholds a probability map: foreground where p > t (strict).
BinaryMask threshold_map(const ProbMap& p, double t);

/// Pixelwise intersection of two masks.
BinaryMask intersect(const BinaryMask& a, const BinaryMask& b);

/// Throws DimensionMismatch unless both grids share height and width.
template <typename A, typename B>
void require_same_size(const A& a, const B& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw DimensionMismatch(std::string(what) + ": size " +
                            std::to_string(a.height) + "x" +
                            std::to_string(a.width) + " vs " +
                            std::to_string(b.height) + "x" +
                            std::to_string(b.width));
  }
}

/// Throws unless train and test ids are disjoint.
void check_disjoint(const DatasetSplit& split);

}  // namespace fgsty

#endif  // FGSTY_CORE_HPP_
