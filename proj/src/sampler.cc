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

#include "vpleak/sampler.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "vpleak/error.h"
#include "vpleak/io.h"

namespace vpleak {

std::string PropertyKindName(PropertyKind kind) {
  return kind == PropertyKind::kSize ? "dataset-size" : "binary-attribute-proportion";
}

PropertyKind ParsePropertyKind(const std::string& name) {
  if (name == "dataset-size") return PropertyKind::kSize;
  if (name == "binary-attribute-proportion") return PropertyKind::kProportion;
  Fail(ErrorCode::kConfig, "unknown property kind '" + name + "'");
}

std::vector<int64_t> CellCounts(std::span<const double> proportions, int64_t n) {
  Require(n >= 1, ErrorCode::kSampling, "subset size must be at least 1");
  for (double p : proportions) {
    Require(p >= 0.0 && p <= 1.0, ErrorCode::kSampling,
            "proportion " + std::to_string(p) + " is outside [0, 1]");
  }
  const size_t k = proportions.size();
  const size_t cells = size_t{1} << k;
  std::vector<int64_t> counts(cells);
  std::vector<int64_t> remainder(cells);  // fixed-point, robust to fp noise
  int64_t assigned = 0;
  for (size_t c = 0; c < cells; ++c) {
    double target = static_cast<double>(n);
    for (size_t j = 0; j < k; ++j) {
      const bool present = ((c >> (k - 1 - j)) & 1) == 0;
      target *= present ? proportions[j] : 1.0 - proportions[j];
    }
    const double whole = std::floor(target + 1e-9);
    counts[c] = static_cast<int64_t>(whole);
    remainder[c] = std::llround(std::max(0.0, target - whole) * 1e9);
    assigned += counts[c];
  }
  std::vector<size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return remainder[a] > remainder[b]; });
  for (size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % cells]];
  return counts;
}

std::string CellName(std::span<const std::string> attributes, size_t cell) {
  if (attributes.empty()) return "all";
  const size_t k = attributes.size();
  std::string out;
  for (size_t j = 0; j < k; ++j) {
    if (j) out += ",";
    out += attributes[j] + "=" + (((cell >> (k - 1 - j)) & 1) == 0 ? "1" : "0");
  }
  return out;
}

SamplingPlan MakePlan(std::span<const PropertySpec> properties,
                      std::span<const double> condition, int64_t default_size) {
  Require(properties.size() == condition.size(), ErrorCode::kConfig,
          "condition vector has " + std::to_string(condition.size()) +
              " values for " + std::to_string(properties.size()) + " properties");
  SamplingPlan plan;
  plan.size = default_size;
  bool have_size = false;
  for (size_t i = 0; i < properties.size(); ++i) {
    if (properties[i].kind == PropertyKind::kSize) {
      Require(!have_size, ErrorCode::kConfig, "more than one size property");
      have_size = true;
      Require(condition[i] >= 1 && condition[i] == std::floor(condition[i]),
              ErrorCode::kConfig,
              "size condition for '" + properties[i].name + "' must be a positive integer");
      plan.size = static_cast<int64_t>(condition[i]);
    } else {
      plan.attributes.push_back(properties[i].attribute);
      plan.proportions.push_back(condition[i]);
    }
  }
  plan.cell_counts = CellCounts(plan.proportions, plan.size);
  return plan;
}

size_t CellOf(const Dataset& dataset, size_t sample,
              std::span<const int> attribute_columns) {
  size_t cell = 0;
  for (int col : attribute_columns) {
    cell = (cell << 1) | (dataset.attributes[sample][col] ? 0 : 1);
  }
  return cell;
}

std::vector<size_t> SampleSubset(const Dataset& dataset, std::span<const size_t> pool,
                                 const SamplingPlan& plan, uint64_t seed) {
  const size_t cells = size_t{1} << plan.attributes.size();
  Require(plan.cell_counts.size() == cells, ErrorCode::kSampling,
          "plan has " + std::to_string(plan.cell_counts.size()) + " cell counts, expected " +
              std::to_string(cells));
  std::vector<int> columns;
  for (const std::string& a : plan.attributes) columns.push_back(dataset.AttributeIndex(a));
  std::vector<std::vector<size_t>> members(cells);
  for (size_t i : pool) {
    Require(i < dataset.size(), ErrorCode::kSampling, "pool index out of range");
    members[CellOf(dataset, i, columns)].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<size_t> out;
  for (size_t c = 0; c < cells; ++c) {
    const auto need = static_cast<size_t>(plan.cell_counts[c]);
    if (members[c].size() < need) {
      Fail(ErrorCode::kSampling, "cell (" + CellName(plan.attributes, c) + ") needs " +
                                     std::to_string(need) + " samples but only " +
                                     std::to_string(members[c].size()) + " are available");
    }
    // Partial Fisher-Yates: the first `need` entries become the draw.
    for (size_t i = 0; i < need; ++i) {
      std::uniform_int_distribution<size_t> pick(i, members[c].size() - 1);
      std::swap(members[c][i], members[c][pick(rng)]);
    }
    out.insert(out.end(), members[c].begin(), members[c].begin() + need);
  }
  std::sort(out.begin(), out.end());
  Require(std::adjacent_find(out.begin(), out.end()) == out.end(), ErrorCode::kSampling,
          "pool contains duplicate indices");
  return out;
}

std::vector<std::vector<size_t>> DisjointPools(size_t n, std::span<const size_t> sizes,
                                               uint64_t seed) {
  const size_t total = std::accumulate(sizes.begin(), sizes.end(), size_t{0});
  Require(total <= n, ErrorCode::kSampling,
          "pools need " + std::to_string(total) + " samples but only " + std::to_string(n) +
              " exist");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<size_t>> pools;
  size_t at = 0;
  for (size_t s : sizes) {
    std::vector<size_t> pool(order.begin() + at, order.begin() + at + s);
    std::sort(pool.begin(), pool.end());
    pools.push_back(std::move(pool));
    at += s;
  }
  return pools;
}

void WriteDatasetIndex(const std::filesystem::path& path, const Dataset& dataset) {
  std::ostringstream out;
  out << "id,label";
  for (const std::string& a : dataset.attribute_names) out << "," << a;
  out << "\n";
  for (size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.ids[i] << "," << dataset.labels[i];
    for (uint8_t bit : dataset.attributes[i]) out << "," << static_cast<int>(bit);
    out << "\n";
  }
  WriteTextFile(path, out.str());
}

nlohmann::json PlanToJson(const SamplingPlan& plan) {
  return {{"attributes", plan.attributes},
          {"proportions", plan.proportions},
          {"size", plan.size},
          {"cell_counts", plan.cell_counts}};
}

SamplingPlan PlanFromJson(const nlohmann::json& j) {
  SamplingPlan plan;
  plan.attributes = j.at("attributes").get<std::vector<std::string>>();
  plan.proportions = j.at("proportions").get<std::vector<double>>();
  plan.size = j.at("size");
  plan.cell_counts = j.at("cell_counts").get<std::vector<int64_t>>();
  return plan;
}

void WriteSubsetManifest(const std::filesystem::path& path, const SamplingPlan& plan,
                         uint64_t seed, std::span<const size_t> indices) {
  nlohmann::json j = {{"plan", PlanToJson(plan)},
                      {"seed", seed},
                      {"indices", std::vector<size_t>(indices.begin(), indices.end())}};
  WriteTextFile(path, j.dump(2) + "\n");
}

}  // namespace vpleak
