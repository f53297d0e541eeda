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

#include "vpleak/data.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "vpleak/error.h"

namespace vpleak {
namespace {

// Smooth pattern in [-1, 1]: a few random plane waves per channel.
Vector MakePattern(const Dims& dims, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(0.5, 3.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> sign(-1.0, 1.0);
  Vector p = Vector::Zero(dims.size());
  for (int c = 0; c < dims.channels; ++c) {
    for (int wave = 0; wave < 3; ++wave) {
      const double fx = freq(rng) * (sign(rng) < 0 ? -1.0 : 1.0);
      const double fy = freq(rng);
      const double ph = phase(rng);
      for (int h = 0; h < dims.height; ++h) {
        for (int w = 0; w < dims.width; ++w) {
          const double u = static_cast<double>(w) / dims.width;
          const double v = static_cast<double>(h) / dims.height;
          p[dims.Index(c, h, w)] +=
              std::sin(2.0 * std::numbers::pi * (fx * u + fy * v) + ph);
        }
      }
    }
  }
  const double m = p.cwiseAbs().maxCoeff();
  if (m > 0) p /= m;
  return p;
}

}  // namespace

int Dataset::AttributeIndex(const std::string& attribute) const {
  auto it = std::find(attribute_names.begin(), attribute_names.end(), attribute);
  Require(it != attribute_names.end(), ErrorCode::kConfig,
          "dataset '" + name + "' has no attribute '" + attribute + "'");
  return static_cast<int>(it - attribute_names.begin());
}

Dataset GenerateDataset(const DatasetDescriptor& d) {
  Require(d.num_classes > 0 && d.num_samples >= 0 && d.dims.size() > 0,
          ErrorCode::kConfig, "invalid dataset descriptor '" + d.name + "'");
  Require(d.label_noise >= 0.0 && d.label_noise <= 1.0, ErrorCode::kConfig,
          "label_noise must be in [0,1]");
  Require(d.shift == "none" || d.shift == "contrast" || d.shift == "invert" ||
              d.shift == "frame",
          ErrorCode::kConfig, "unknown domain shift '" + d.shift + "'");

  std::mt19937_64 pattern_rng(d.pattern_seed);
  // Patterns are drawn for offset classes too, so datasets with different
  // offsets but the same pattern seed agree on what pattern k looks like.
  const int num_patterns = d.num_classes + std::max(0, d.class_offset);
  std::vector<Vector> class_patterns;
  for (int k = 0; k < num_patterns; ++k) {
    class_patterns.push_back(MakePattern(d.dims, pattern_rng));
  }
  std::mt19937_64 attribute_rng(d.pattern_seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Vector> attribute_patterns;
  for (size_t a = 0; a < d.attributes.size(); ++a) {
    attribute_patterns.push_back(MakePattern(d.dims, attribute_rng));
  }

  Dataset out;
  out.name = d.name;
  out.dims = d.dims;
  out.num_classes = d.num_classes;
  for (const auto& a : d.attributes) out.attribute_names.push_back(a.name);

  std::mt19937_64 rng(d.seed);
  std::uniform_int_distribution<int> label_dist(0, d.num_classes - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < d.num_samples; ++i) {
    const int label = label_dist(rng);
    std::vector<uint8_t> attrs;
    Vector x = d.signal * class_patterns[label + d.class_offset];
    for (size_t a = 0; a < d.attributes.size(); ++a) {
      const uint8_t bit = unit(rng) < d.attributes[a].prevalence ? 1 : 0;
      attrs.push_back(bit);
      if (bit) x += d.attributes[a].amplitude * attribute_patterns[a];
    }
    x = (0.5 + 0.5 * x.array()).matrix();
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] += d.noise * gauss(rng);
    if (d.shift == "contrast") {
      x = (0.5 + d.shift_strength * (x.array() - 0.5)).matrix();
    } else if (d.shift == "invert") {
      x = (1.0 - x.array()).matrix();
    } else if (d.shift == "frame") {
      for (int c = 0; c < d.dims.channels; ++c) {
        for (int h = 0; h < d.dims.height; ++h) {
          for (int w = 0; w < d.dims.width; ++w) {
            const bool border = h < d.frame_width || w < d.frame_width ||
                                h >= d.dims.height - d.frame_width ||
                                w >= d.dims.width - d.frame_width;
            if (border) x[d.dims.Index(c, h, w)] *= d.shift_strength;
          }
        }
      }
    }
    x = x.cwiseMax(0.0).cwiseMin(1.0);
    int observed = label;
    if (d.label_noise > 0.0 && unit(rng) < d.label_noise) observed = label_dist(rng);
    out.ids.push_back(i);
    out.images.push_back(std::move(x));
    out.labels.push_back(observed);
    out.attributes.push_back(std::move(attrs));
  }
  return out;
}

Dataset Subset(const Dataset& dataset, std::span<const size_t> indices) {
  Dataset out;
  out.name = dataset.name;
  out.dims = dataset.dims;
  out.num_classes = dataset.num_classes;
  out.attribute_names = dataset.attribute_names;
  for (size_t i : indices) {
    Require(i < dataset.size(), ErrorCode::kInput, "subset index out of range");
    out.ids.push_back(dataset.ids[i]);
    out.images.push_back(dataset.images[i]);
    out.labels.push_back(dataset.labels[i]);
    out.attributes.push_back(dataset.attributes[i]);
  }
  return out;
}

Vector ResizeImage(const Vector& image, const Dims& from, const Dims& to) {
  Require(from.channels == to.channels, ErrorCode::kConfig,
          "cannot resize " + ToString(from) + " to " + ToString(to) +
              ": channel count differs");
  Require(image.size() == from.size(), ErrorCode::kInput, "image size mismatch");
  if (from == to) return image;
  Vector out(to.size());
  const double sy = static_cast<double>(from.height) / to.height;
  const double sx = static_cast<double>(from.width) / to.width;
  for (int c = 0; c < to.channels; ++c) {
    for (int h = 0; h < to.height; ++h) {
      const double fy = std::clamp((h + 0.5) * sy - 0.5, 0.0, from.height - 1.0);
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, from.height - 1);
      const double ty = fy - y0;
      for (int w = 0; w < to.width; ++w) {
        const double fx = std::clamp((w + 0.5) * sx - 0.5, 0.0, from.width - 1.0);
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, from.width - 1);
        const double tx = fx - x0;
        const double top = (1 - tx) * image[from.Index(c, y0, x0)] +
                           tx * image[from.Index(c, y0, x1)];
        const double bottom = (1 - tx) * image[from.Index(c, y1, x0)] +
                              tx * image[from.Index(c, y1, x1)];
        out[to.Index(c, h, w)] = (1 - ty) * top + ty * bottom;
      }
    }
  }
  return out;
}

}  // namespace vpleak
