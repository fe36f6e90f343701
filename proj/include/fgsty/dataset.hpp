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

#ifndef FGSTY_DATASET_HPP_
#define FGSTY_DATASET_HPP_

#include <filesystem>
#include <string>

#include "fgsty/core.hpp"

namespace fgsty {

/// On-disk layout:
///   root/{train,test}/images/<name>.png
///   root/{train,test}/masks/<name>.png     (8-bit single channel)
/// A split whose masks/ directory is absent is loaded unlabeled; when the
/// directory exists, every image must have a mask with the same file name.
/// Samples are ordered by file name.
struct LoadOptions {
  // Square working resolution; 0 keeps native size.
  int resolution = 64;
};

DatasetSplit load_dataset(const std::filesystem::path& root,
                          const LoadOptions& options = {});

/// Writes a split in the layout above. Unlabeled samples get no mask file.
void save_dataset(const DatasetSplit& split, const std::filesystem::path& root);

/// 8-bit mask value > 127 is foreground.
inline bool binarize_mask_value(unsigned v) { return v > 127; }

Image read_image(const std::filesystem::path& path, int resolution);
BinaryMask read_mask(const std::filesystem::path& path, int resolution);
void write_image(const Image& image, const std::filesystem::path& path);
void write_mask(const BinaryMask& mask, const std::filesystem::path& path);

}  // namespace fgsty

#endif  // FGSTY_DATASET_HPP_
