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

#include <cmath>

#include <gtest/gtest.h>

#include "test_support.h"
#include "vpleak/defense.h"

namespace vpleak {
namespace {

TEST(AddNoise, ZeroSigmaIsBitIdentity) {
  const Prompt p = testing::RandomPrompt(testing::ToySpec(), 1);
  EXPECT_EQ(AddNoise(p, {0.0, 99}), p);
}

TEST(AddNoise, MomentsOnTenThousandCells) {
  PromptSpec spec;
  spec.prompt_size = 20;
  spec.dims = {3, 96, 96};
  const Prompt p = Prompt::Zero(spec);
  const Prompt noised = AddNoise(p, {1.0, 7});
  const std::vector<int> border = BorderIndices(spec);
  ASSERT_GE(border.size(), 10000u);
  double sum = 0.0, sq = 0.0;
  for (int i : border) {
    sum += noised.values[i];
    sq += static_cast<double>(noised.values[i]) * noised.values[i];
  }
  const double n = static_cast<double>(border.size());
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(std::sqrt(sq / n - mean * mean), 1.0, 0.05);
  CheckBorderSupport(noised);  // off-border cells stay exactly zero
}

TEST(AddNoise, SeededAndValidated) {
  const Prompt p = testing::RandomPrompt(testing::ToySpec(), 2);
  EXPECT_EQ(AddNoise(p, {0.5, 3}), AddNoise(p, {0.5, 3}));
  EXPECT_NE(AddNoise(p, {0.5, 3}), AddNoise(p, {0.5, 4}));
  EXPECT_VPLEAK_ERROR(AddNoise(p, {-0.1, 3}), ErrorCode::kConfig);
}

TEST(EvalDefense, RowsPerSigmaAndFamily) {
  const std::vector<double> sigmas = {0.0, 0.5};
  const auto rows = EvalDefense("mia", sigmas, true, 11, [](double sigma, bool adaptive) {
    EXPECT_TRUE(adaptive);
    return DefensePoint{1.0 - sigma, {{"nn", 0.8 - sigma}, {"metric-ment", 0.7}}};
  });
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].family, "metric-ment");
  EXPECT_EQ(rows[1].family, "nn");
  EXPECT_EQ(rows[2].sigma, 0.5);
  EXPECT_EQ(rows[3].accuracy, 0.8 - 0.5);
  EXPECT_EQ(rows[3].seed, 11u);
  EXPECT_VPLEAK_ERROR(EvalDefense("mia", {}, false, 0, nullptr), ErrorCode::kConfig);
  const std::vector<double> negative = {-1.0};
  EXPECT_VPLEAK_ERROR(EvalDefense("mia", negative, false, 0, nullptr), ErrorCode::kConfig);
}

TEST(FindTradeoffSigma, SmallestQualifyingSigma) {
  // utility 1.0, 0.9, 0.85, 0.5; attack 0.8, 0.6, 0.52, 0.5.
  std::vector<TradeoffRow> rows;
  const double u[] = {1.0, 0.9, 0.85, 0.5}, a[] = {0.8, 0.6, 0.52, 0.5};
  for (int i = 0; i < 4; ++i) {
    rows.push_back({"mia", 0.2 * i, false, u[i], "nn", a[i], 1});
    rows.push_back({"mia", 0.2 * i, true, u[i], "nn", a[i] + 0.01, 1});
  }
  EXPECT_DOUBLE_EQ(FindTradeoffSigma(rows, 0.8, 0.55), 0.4);
  EXPECT_EQ(FindTradeoffSigma(rows, 0.8, 0.5), -1.0);
}

TEST(FindTradeoffSigma, AveragesOverSeeds) {
  std::vector<TradeoffRow> rows = {
      {"mia", 0.0, false, 1.0, "nn", 0.9, 1}, {"mia", 0.0, false, 1.0, "nn", 0.9, 2},
      {"mia", 0.6, false, 0.9, "nn", 0.50, 1}, {"mia", 0.6, false, 0.9, "nn", 0.58, 2}};
  EXPECT_DOUBLE_EQ(FindTradeoffSigma(rows, 0.8, 0.55), 0.6);
  rows[3].accuracy = 0.62;
  EXPECT_EQ(FindTradeoffSigma(rows, 0.8, 0.55), -1.0);
}

TEST(TradeoffCsv, Columns) {
  const std::vector<TradeoffRow> rows = {{"pia", 2.0, true, 0.61234, "pia", 0.5, 9}};
  EXPECT_EQ(TradeoffCsv(rows),
            "context,sigma,adaptive,utility,family,accuracy,seed\n"
            "pia,2.0000,1,0.6123,pia,0.5000,9\n");
}

}  // namespace
}  // namespace vpleak
