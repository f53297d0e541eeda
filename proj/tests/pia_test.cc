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

#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "test_support.h"
#include "vpleak/pia.h"

namespace vpleak {
namespace {

using testing::ToyModel;
using testing::ToySpec;

PiaTask TwoPropertyTask() {
  PiaTask task;
  task.properties = {{"male", PropertyKind::kProportion, "male"},
                     {"size", PropertyKind::kSize, ""}};
  task.values = {{0.2, 0.8}, {16, 32}};
  task.target_property = 1;
  return task;
}

TEST(EnumerateSamplingFunctions, OdometerOrder) {
  const auto f = EnumerateSamplingFunctions(TwoPropertyTask());
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[0].condition, (std::vector<double>{0.2, 16}));
  EXPECT_EQ(f[1].condition, (std::vector<double>{0.2, 32}));
  EXPECT_EQ(f[2].condition, (std::vector<double>{0.8, 16}));
  EXPECT_EQ(f[3].condition, (std::vector<double>{0.8, 32}));
  EXPECT_EQ(f[0].label, 0);
  EXPECT_EQ(f[1].label, 1);
  EXPECT_EQ(f[3].label, 1);
}

TEST(PiaTask, ValidationErrors) {
  PiaTask task = TwoPropertyTask();
  task.values[0] = {0.0, 0.5};
  EXPECT_VPLEAK_ERROR(task.Validate(), ErrorCode::kConfig);
  task = TwoPropertyTask();
  task.values[1] = {16.5};
  EXPECT_VPLEAK_ERROR(task.Validate(), ErrorCode::kConfig);
  task = TwoPropertyTask();
  task.target_property = 2;
  EXPECT_VPLEAK_ERROR(task.Validate(), ErrorCode::kConfig);
}

TEST(DeriveSeed, DistinctAndStable) {
  EXPECT_EQ(DeriveSeed(1, 2), DeriveSeed(1, 2));
  EXPECT_NE(DeriveSeed(1, 2), DeriveSeed(1, 3));
  EXPECT_NE(DeriveSeed(1, 2), DeriveSeed(2, 2));
}

PromptJobConfig FastJob(int epochs, int jobs = 1) {
  PromptJobConfig c;
  c.spec = ToySpec();
  c.label_map = {4};
  c.hyper.epochs = epochs;
  c.hyper.learning_rate = 10;
  c.hyper.batch_size = 16;
  c.jobs = jobs;
  return c;
}

std::vector<size_t> AllIndices() {
  std::vector<size_t> pool(testing::ToyData().size());
  std::iota(pool.begin(), pool.end(), 0);
  return pool;
}

TEST(GeneratePromptSet, CountsLabelsAndProvenance) {
  const PiaTask task = TwoPropertyTask();
  const auto functions = EnumerateSamplingFunctions(task);
  const auto pool = AllIndices();
  const PromptSet set = GeneratePromptSet(ToyModel(), testing::ToyData(), pool, task, functions,
                                          2, FastJob(1), "shadow", 5);
  ASSERT_EQ(set.size(), 8u);
  EXPECT_EQ(set.labels, (std::vector<int>{0, 0, 1, 1, 0, 0, 1, 1}));
  for (size_t i = 0; i < set.size(); ++i) {
    const auto& f = functions[i / 2];
    EXPECT_EQ(set.subsets[i].size(), static_cast<size_t>(f.condition[1]));
    EXPECT_EQ(set.prompts[i].provenance.condition.at("male"), f.condition[0]);
    EXPECT_EQ(set.prompts[i].provenance.train_size, static_cast<int64_t>(f.condition[1]));
    CheckBorderSupport(set.prompts[i]);
  }
  EXPECT_EQ(set.role, "shadow");
}

TEST(GeneratePromptSet, ParallelMatchesSerial) {
  const PiaTask task = TwoPropertyTask();
  const auto functions = EnumerateSamplingFunctions(task);
  const auto pool = AllIndices();
  const PromptSet a = GeneratePromptSet(ToyModel(), testing::ToyData(), pool, task, functions, 1,
                                        FastJob(1, 1), "target", 9);
  const PromptSet b = GeneratePromptSet(ToyModel(), testing::ToyData(), pool, task, functions, 1,
                                        FastJob(1, 3), "target", 9);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.prompts[i], b.prompts[i]);
    EXPECT_EQ(a.subsets[i], b.subsets[i]);
  }
}

TEST(GeneratePromptSet, ZeroRunsAndInfeasible) {
  const PiaTask task = TwoPropertyTask();
  const auto functions = EnumerateSamplingFunctions(task);
  const auto pool = AllIndices();
  const std::vector<SamplingFunction> one(functions.begin(), functions.begin() + 1);
  EXPECT_EQ(GeneratePromptSet(ToyModel(), testing::ToyData(), pool, task, one, 0, FastJob(1),
                              "shadow", 1)
                .size(),
            0u);
  const std::vector<size_t> tiny(pool.begin(), pool.begin() + 10);
  EXPECT_VPLEAK_ERROR(GeneratePromptSet(ToyModel(), testing::ToyData(), tiny, task, one, 1,
                                        FastJob(1), "shadow", 1),
                      ErrorCode::kSampling);
}

TEST(EncodeCanvas, ZeroPromptZeroCanvas) {
  EXPECT_EQ(EncodeCanvas(Prompt::Zero(ToySpec()), {3, 64, 64}).squaredNorm(), 0.0);
}

TEST(EncodeCanvas, TopLeftPlacement) {
  const PromptSpec spec = ToySpec(5);
  Prompt prompt = Prompt::Zero(spec);
  for (int i : BorderIndices(spec)) prompt.values[i] = 1.0f;
  const Dims canvas_dims{3, 224, 224};
  const Vector canvas = EncodeCanvas(prompt, canvas_dims);
  int64_t nonzero = 0;
  for (int c = 0; c < 3; ++c) {
    for (int h = 0; h < 224; ++h) {
      for (int w = 0; w < 224; ++w) {
        if (canvas[canvas_dims.Index(c, h, w)] == 0.0) continue;
        ++nonzero;
        EXPECT_LT(h, 32);
        EXPECT_LT(w, 32);
      }
    }
  }
  EXPECT_EQ(nonzero, 3 * (32 * 32 - 22 * 22));
}

TEST(EncodeCanvas, SameDimsAndTooLarge) {
  const Prompt prompt = testing::RandomPrompt(ToySpec(), 6);
  const Vector canvas = EncodeCanvas(prompt, prompt.spec.dims);
  EXPECT_TRUE((canvas.array() == prompt.AsVector().array()).all());
  EXPECT_VPLEAK_ERROR(EncodeCanvas(prompt, {3, 16, 16}), ErrorCode::kEncoding);
  EXPECT_VPLEAK_ERROR(EncodeCanvas(prompt, {1, 64, 64}), ErrorCode::kEncoding);
}

PromptSet RandomSet(int n, uint64_t seed, bool separable) {
  PromptSet set;
  set.role = "shadow";
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) {
    const int label = separable ? i % 2 : static_cast<int>(rng() % 2);
    const double scale = separable ? (label ? 1.0 : 0.1) : 0.5;
    set.prompts.push_back(testing::RandomPrompt(ToySpec(), rng(), scale));
    set.labels.push_back(label);
  }
  return set;
}

PiaHyper FastPia(uint64_t seed = 1) {
  PiaHyper h;
  h.epochs = 30;
  h.seed = seed;
  return h;
}

TEST(TrainPiaModel, ZeroVersusTrainedPrompts) {
  const PiaTask task = [] {
    PiaTask t;
    t.properties = {{"size", PropertyKind::kSize, ""}};
    t.values = {{32}};
    return t;
  }();
  const auto functions = EnumerateSamplingFunctions(task);
  const auto pool = AllIndices();
  PromptSet zero = GeneratePromptSet(ToyModel(), testing::ToyData(), pool, task, functions, 10,
                                     FastJob(0), "shadow", 1);
  const PromptSet trained = GeneratePromptSet(ToyModel(), testing::ToyData(), pool, task,
                                              functions, 10, FastJob(4), "shadow", 2);
  for (size_t i = 0; i < trained.size(); ++i) {
    zero.prompts.push_back(trained.prompts[i]);
    zero.labels.push_back(1);
  }
  const PiaAttackModel model = TrainPiaModel(zero, 2, FastPia());
  EXPECT_GE(EvaluatePia(model, zero), 0.95);
  EXPECT_EQ(model.Infer(zero.prompts[15]), 1);
  EXPECT_EQ(model.Infer(zero.prompts[3]), 0);
}

TEST(TrainPiaModel, SeparableDeterministicAndStable) {
  const PromptSet shadow = RandomSet(60, 3, true);
  const PiaAttackModel a = TrainPiaModel(shadow, 2, FastPia());
  EXPECT_GE(EvaluatePia(a, shadow), 0.95);
  EXPECT_EQ(TrainPiaModel(shadow, 2, FastPia()).digest(), a.digest());
  EXPECT_EQ(a.Infer(shadow.prompts[0]), a.Infer(shadow.prompts[0]));
  EXPECT_GE(EvaluatePia(a, RandomSet(60, 4, true)), 0.9);
}

TEST(TrainPiaModel, ShuffledLabelsNearChance) {
  const PiaAttackModel model = TrainPiaModel(RandomSet(100, 5, false), 2, FastPia());
  EXPECT_NEAR(EvaluatePia(model, RandomSet(400, 6, false)), 0.5, 0.1);
}

TEST(TrainPiaModel, Errors) {
  PromptSet single = RandomSet(10, 7, true);
  for (int& l : single.labels) l = 0;
  EXPECT_VPLEAK_ERROR(TrainPiaModel(single, 2, FastPia()), ErrorCode::kTraining);
  const PiaAttackModel model = TrainPiaModel(RandomSet(20, 8, true), 2, FastPia());
  PromptSpec big = ToySpec();
  big.dims = {3, 40, 40};
  EXPECT_VPLEAK_ERROR(model.Infer(Prompt::Zero(big)), ErrorCode::kInput);
  EXPECT_VPLEAK_ERROR(EvaluatePia(model, PromptSet{}), ErrorCode::kInput);
}

TEST(EvaluatePia, PerfectAndConstant) {
  const PiaAttackModel model = TrainPiaModel(RandomSet(20, 9, true), 2, FastPia());
  PromptSet target = RandomSet(30, 10, true);
  for (size_t i = 0; i < target.size(); ++i) target.labels[i] = model.Infer(target.prompts[i]);
  EXPECT_EQ(EvaluatePia(model, target), 1.0);
  PromptSet same;
  for (int i = 0; i < 20; ++i) {
    same.prompts.push_back(Prompt::Zero(ToySpec()));
    same.labels.push_back(i % 2);
  }
  EXPECT_EQ(EvaluatePia(model, same), 0.5);
}

TEST(PromptSetFiles, RoundTrip) {
  const PiaTask task = TwoPropertyTask();
  const auto functions = EnumerateSamplingFunctions(task);
  const auto pool = AllIndices();
  const PromptSet set = GeneratePromptSet(ToyModel(), testing::ToyData(), pool, task, functions,
                                          1, FastJob(1), "target", 11);
  const auto dir = testing::TempDir("prompt_set");
  WritePromptSet(dir, set);
  const PromptSet back = ReadPromptSet(dir, "target");
  ASSERT_EQ(back.size(), set.size());
  for (size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(back.prompts[i], set.prompts[i]);
    EXPECT_EQ(back.labels[i], set.labels[i]);
    EXPECT_EQ(back.subsets[i], set.subsets[i]);
    EXPECT_EQ(back.subset_seeds[i], set.subset_seeds[i]);
    EXPECT_EQ(back.plans[i].cell_counts, set.plans[i].cell_counts);
  }
}

}  // namespace
}  // namespace vpleak
