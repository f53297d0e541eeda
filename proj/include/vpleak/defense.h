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

// Gaussian noise on released prompts, and the utility/attack trade-off it
// buys against naive and adaptive adversaries.

#ifndef VPLEAK_DEFENSE_H_
#define VPLEAK_DEFENSE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vpleak/prompt.h"

namespace vpleak {

struct DefenseConfig {
  double sigma = 0.0;
  uint64_t seed = 0;
};

// Adds i.i.d. N(0, sigma^2) to every border cell; interior cells stay 0.
// sigma == 0 returns an exact copy. Throws kConfig when sigma < 0.
Prompt AddNoise(const Prompt& prompt, const DefenseConfig& config);

struct TradeoffRow {
  std::string context;  // pia | mia
  double sigma = 0.0;
  bool adaptive = false;
  double utility = 0.0;
  std::string family;  // attack family
  double accuracy = 0.0;
  uint64_t seed = 0;
};

// Utility and attack accuracies for one (sigma, adaptive) point, produced
// by the caller-provided evaluator.
struct DefensePoint {
  double utility = 0.0;
  std::map<std::string, double> accuracy;  // family -> accuracy
};

using DefenseEvaluator = std::function<DefensePoint(double sigma, bool adaptive)>;

// Evaluates every sigma for the requested adversary and flattens the result
// to one row per attack family. Throws kConfig on an empty sigma grid or a
// negative sigma.
std::vector<TradeoffRow> EvalDefense(const std::string& context,
                                     std::span<const double> sigmas, bool adaptive,
                                     uint64_t seed, const DefenseEvaluator& evaluate);

// Smallest sigma whose mean utility (over seeds) is at least
// `utility_ratio` times the sigma = 0 mean while every mean attack accuracy
// (each family, both adversaries) is at most `attack_ceiling`. Returns a
// negative value when none qualifies.
double FindTradeoffSigma(std::span<const TradeoffRow> rows, double utility_ratio,
                         double attack_ceiling);

std::string TradeoffCsv(std::span<const TradeoffRow> rows);

}  // namespace vpleak

#endif  // VPLEAK_DEFENSE_H_
