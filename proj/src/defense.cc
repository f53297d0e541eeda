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

#include "vpleak/defense.h"

#include <algorithm>
#include <random>
#include <sstream>
#include <tuple>

#include "vpleak/error.h"
#include "vpleak/io.h"

namespace vpleak {

Prompt AddNoise(const Prompt& prompt, const DefenseConfig& config) {
  Require(config.sigma >= 0.0, ErrorCode::kConfig,
          "noise sigma must be non-negative, got " + std::to_string(config.sigma));
  Prompt out = prompt;
  if (config.sigma == 0.0) return out;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, config.sigma);
  for (int idx : BorderIndices(prompt.spec)) {
    out.values[idx] = static_cast<float>(out.values[idx] + gauss(rng));
  }
  return out;
}

std::vector<TradeoffRow> EvalDefense(const std::string& context,
                                     std::span<const double> sigmas, bool adaptive,
                                     uint64_t seed, const DefenseEvaluator& evaluate) {
  Require(!sigmas.empty(), ErrorCode::kConfig, "defense sigma grid is empty");
  for (double s : sigmas) {
    Require(s >= 0.0, ErrorCode::kConfig, "negative sigma in the defense grid");
  }
  std::vector<TradeoffRow> rows;
  for (double sigma : sigmas) {
    const DefensePoint point = evaluate(sigma, adaptive);
    for (const auto& [family, accuracy] : point.accuracy) {
      rows.push_back({context, sigma, adaptive, point.utility, family, accuracy, seed});
    }
  }
  return rows;
}

double FindTradeoffSigma(std::span<const TradeoffRow> rows, double utility_ratio,
                         double attack_ceiling) {
  // Means over seeds: utility per sigma, accuracy per (sigma, adversary, family).
  std::map<double, std::pair<double, int>> utility;
  std::map<std::tuple<double, bool, std::string>, std::pair<double, int>> accuracy;
  for (const TradeoffRow& r : rows) {
    auto& u = utility[r.sigma];
    u.first += r.utility;
    ++u.second;
    auto& a = accuracy[{r.sigma, r.adaptive, r.family}];
    a.first += r.accuracy;
    ++a.second;
  }
  auto base = utility.find(0.0);
  if (base == utility.end()) return -1.0;
  const double base_utility = base->second.first / base->second.second;
  for (const auto& [sigma, u] : utility) {
    if (u.first / u.second < utility_ratio * base_utility) continue;
    bool ok = true;
    for (const auto& [key, a] : accuracy) {
      if (std::get<0>(key) == sigma && a.first / a.second > attack_ceiling) ok = false;
    }
    if (ok) return sigma;
  }
  return -1.0;
}

std::string TradeoffCsv(std::span<const TradeoffRow> rows) {
  std::ostringstream out;
  out << "context,sigma,adaptive,utility,family,accuracy,seed\n";
  for (const TradeoffRow& r : rows) {
    out << r.context << "," << FormatDecimal(r.sigma) << "," << (r.adaptive ? 1 : 0) << ","
        << FormatDecimal(r.utility) << "," << r.family << "," << FormatDecimal(r.accuracy)
        << "," << r.seed << "\n";
  }
  return out.str();
}

}  // namespace vpleak
