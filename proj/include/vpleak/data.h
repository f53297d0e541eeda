// Copyright 2026 The vpleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Labeled image datasets with per-sample binary attributes, and the
// deterministic synthetic generator that stands in for face/scene corpora.

#ifndef VPLEAK_DATA_H_
#define VPLEAK_DATA_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vpleak/nn.h"

namespace vpleak {

struct AttributeSpec {
  std::string name;
  double prevalence = 0.5;  // probability the attribute is 1
  double amplitude = 0.3;   // strength of the attribute's visual pattern

  bool operator==(const AttributeSpec&) const = default;
};

// Everything needed to regenerate a dataset bit-for-bit.
//
// Images are built as 0.5 + 0.5 * (signal * class_pattern + attribute
// patterns) + per-pixel Gaussian noise, then transformed by the domain shift
// and clipped to [0, 1]. Datasets sharing `pattern_seed` share class and
// attribute patterns; `seed` drives the per-sample draws.
struct DatasetDescriptor {
  std::string name;
  int num_classes = 4;
  Dims dims{3, 32, 32};
  int num_samples = 1000;
  uint64_t seed = 0;
  uint64_t pattern_seed = 0;
  double signal = 1.0;
  double noise = 0.1;
  double label_noise = 0.0;  // fraction of labels replaced uniformly at random
  int class_offset = 0;      // downstream class k draws pattern (k + offset)
  std::string shift = "none";  // none | contrast | invert | frame
  double shift_strength = 1.0;
  int frame_width = 8;  // border width scaled by a "frame" shift
  std::vector<AttributeSpec> attributes;

  bool operator==(const DatasetDescriptor&) const = default;
};

struct Dataset {
  std::string name;
  Dims dims;
  int num_classes = 0;
  std::vector<std::string> attribute_names;
  std::vector<int64_t> ids;
  std::vector<Vector> images;  // CHW intensities
  std::vector<int> labels;
  std::vector<std::vector<uint8_t>> attributes;  // [sample][attribute]

  size_t size() const { return images.size(); }
  int AttributeIndex(const std::string& attribute) const;
};

Dataset GenerateDataset(const DatasetDescriptor& descriptor);

// Copies the listed samples (ids preserved).
Dataset Subset(const Dataset& dataset, std::span<const size_t> indices);

// Bilinear resize of a CHW image; channel counts must agree.
Vector ResizeImage(const Vector& image, const Dims& from, const Dims& to);

}  // namespace vpleak

#endif  // VPLEAK_DATA_H_
