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

#include "fgsty/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fgsty {

namespace fs = std::filesystem;

bool Image::valid() const {
  return std::all_of(data.begin(), data.end(), [](float v) {
    return std::isfinite(v) && v >= 0.0f && v <= 1.0f;
  });
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(
      data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

BinaryMask threshold_map(const ProbMap& p, double t) {
  BinaryMask m(p.height, p.width);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    m.data[i] = p.data[i] > t ? 1 : 0;
  }
  return m;
}

BinaryMask intersect(const BinaryMask& a, const BinaryMask& b) {
  require_same_size(a, b, "intersect");
  BinaryMask m(a.height, a.width);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m.data[i] = (a.data[i] && b.data[i]) ? 1 : 0;
  }
  return m;
}

void check_disjoint(const DatasetSplit& split) {
  std::vector<std::string> ids;
  for (const auto& s : split.train) ids.push_back(s.sample_id);
  std::sort(ids.begin(), ids.end());
  for (const auto& s : split.test) {
    if (std::binary_search(ids.begin(), ids.end(), s.sample_id)) {
      throw Error("dataset " + split.domain_id + ": sample '" + s.sample_id +
                  "' appears in both train and test");
    }
  }
}

Image read_image(const fs::path& path, int resolution) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("unreadable image: " + path.string());
  if (resolution > 0 && (bgr.rows != resolution || bgr.cols != resolution)) {
    cv::resize(bgr, bgr, cv::Size(resolution, resolution), 0, 0,
               cv::INTER_AREA);
  }
  Image img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = row[x][2 - c] / 255.0f;
      }
    }
  }
  return img;
}

BinaryMask read_mask(const fs::path& path, int resolution) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw Error("unreadable mask: " + path.string());
  if (resolution > 0 && (gray.rows != resolution || gray.cols != resolution)) {
    cv::resize(gray, gray, cv::Size(resolution, resolution), 0, 0,
               cv::INTER_AREA);
  }
  BinaryMask m(gray.rows, gray.cols);
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) m.set(y, x, binarize_mask_value(row[x]));
  }
  return m;
}

void write_image(const Image& image, const fs::path& path) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(y, x, c), 0.0f, 1.0f);
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  if (!cv::imwrite(path.string(), bgr)) {
    throw Error("cannot write image: " + path.string());
  }
}

void write_mask(const BinaryMask& mask, const fs::path& path) {
  cv::Mat gray(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < mask.width; ++x) row[x] = mask.at(y, x) ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), gray)) {
    throw Error("cannot write mask: " + path.string());
  }
}

namespace {

std::vector<Sample> load_part(const fs::path& dir, const std::string& domain,
                              const LoadOptions& options) {
  std::vector<Sample> samples;
  const fs::path images = dir / "images";
  const fs::path masks = dir / "masks";
  if (!fs::is_directory(images)) return samples;
  const bool labeled = fs::is_directory(masks);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  for (const auto& file : files) {
    Sample s;
    s.domain_id = domain;
    s.sample_id = file.stem().string();
    s.image = read_image(file, options.resolution);
    if (labeled) {
      const fs::path mask_path = masks / file.filename();
      if (!fs::exists(mask_path)) {
        throw Error("missing mask for labeled sample: " + mask_path.string());
      }
      s.mask = read_mask(mask_path, options.resolution);
      require_same_size(s.image, *s.mask, mask_path.string().c_str());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_part(const std::vector<Sample>& samples, const fs::path& dir) {
  fs::create_directories(dir / "images");
  bool any_mask = std::any_of(samples.begin(), samples.end(),
                              [](const Sample& s) { return s.labeled(); });
  if (any_mask) fs::create_directories(dir / "masks");
  for (const auto& s : samples) {
    write_image(s.image, dir / "images" / (s.sample_id + ".png"));
    if (s.mask) write_mask(*s.mask, dir / "masks" / (s.sample_id + ".png"));
  }
}

}  // namespace

DatasetSplit load_dataset(const fs::path& root, const LoadOptions& options) {
  if (!fs::is_directory(root)) {
    throw Error("dataset root is not a directory: " + root.string());
  }
  DatasetSplit split;
  split.domain_id = fs::absolute(root).lexically_normal().filename().string();
  if (split.domain_id.empty()) {
    split.domain_id = fs::absolute(root).parent_path().filename().string();
  }
  split.train = load_part(root / "train", split.domain_id, options);
  split.test = load_part(root / "test", split.domain_id, options);
  if (split.train.empty() && split.test.empty()) {
    throw Error("dataset " + root.string() +
                " has no train/images or test/images PNG files");
  }
  check_disjoint(split);
  return split;
}

void save_dataset(const DatasetSplit& split, const fs::path& root) {
  save_part(split.train, root / "train");
  save_part(split.test, root / "test");
}

}  // namespace fgsty
