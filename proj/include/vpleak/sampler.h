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

// Property-conditioned subset sampling with exact per-cell counts.
//
// A cell is one combination of the binary attributes named by the
// proportion properties of a plan. Cells are ordered lexicographically with
// "attribute present" before "attribute absent", so for two attributes the
// order is (1,1), (1,0), (0,1), (0,0).

#ifndef VPLEAK_SAMPLER_H_
#define VPLEAK_SAMPLER_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpleak/data.h"

namespace vpleak {

enum class PropertyKind { kProportion, kSize };

struct PropertySpec {
  std::string name;
  PropertyKind kind = PropertyKind::kProportion;
  std::string attribute;  // binary attribute column, proportions only

  bool operator==(const PropertySpec&) const = default;
};

std::string PropertyKindName(PropertyKind kind);
PropertyKind ParsePropertyKind(const std::string& name);

// Proportions of the plan's attributes (in plan order) and the subset size.
struct SamplingPlan {
  std::vector<std::string> attributes;
  std::vector<double> proportions;
  int64_t size = 0;
  std::vector<int64_t> cell_counts;  // 2^attributes entries, cell order
};

// Fractional target N * prod(marginals) per cell, integerized by largest
// remainder (ties: earlier cell). Throws kSampling if a proportion lies
// outside [0, 1] or N < 1.
std::vector<int64_t> CellCounts(std::span<const double> proportions, int64_t n);

// Human-readable cell label such as "youth=1,male=0".
std::string CellName(std::span<const std::string> attributes, size_t cell);

// Builds a plan for the given condition values, one per property. The size
// property (if any) sets N; otherwise `default_size` does.
SamplingPlan MakePlan(std::span<const PropertySpec> properties,
                      std::span<const double> condition, int64_t default_size);

// Cell index of a sample under the plan's attributes.
size_t CellOf(const Dataset& dataset, size_t sample,
              std::span<const int> attribute_columns);

// Draws plan.size distinct indices from `pool` (indices into `dataset`)
// with exactly plan.cell_counts[c] from each cell c. Returned in ascending
// order. Throws kSampling naming the first cell that is too small.
std::vector<size_t> SampleSubset(const Dataset& dataset,
                                 std::span<const size_t> pool,
                                 const SamplingPlan& plan, uint64_t seed);

// Splits [0, n) into consecutive shuffled chunks of the given sizes.
std::vector<std::vector<size_t>> DisjointPools(size_t n,
                                               std::span<const size_t> sizes,
                                               uint64_t seed);

// CSV with columns id,label,<attribute...>.
void WriteDatasetIndex(const std::filesystem::path& path, const Dataset& dataset);

nlohmann::json PlanToJson(const SamplingPlan& plan);
SamplingPlan PlanFromJson(const nlohmann::json& j);

// Plan + seed + indices, enough to re-draw or audit a subset.
void WriteSubsetManifest(const std::filesystem::path& path,
                         const SamplingPlan& plan, uint64_t seed,
                         std::span<const size_t> indices);

}  // namespace vpleak

#endif  // VPLEAK_SAMPLER_H_
