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
#include <random>

#include <gtest/gtest.h>

#include "test_support.h"
#include "vpleak/io.h"
#include "vpleak/model_zoo.h"

namespace vpleak {
namespace {

using testing::ToyData;
using testing::ToyModel;
using testing::ToySpec;

TEST(Pretrain, SameSeedSameDigest) {
  ArchConfig arch;
  arch.epochs = 1;
  DatasetDescriptor d = testing::ToyBase();
  d.num_samples = 120;
  const FrozenClassifier a = PretrainBase(d, arch, 7, "a");
  const FrozenClassifier b = PretrainBase(d, arch, 7, "b");
  const FrozenClassifier c = PretrainBase(d, arch, 8, "c");
  EXPECT_EQ(a.num_classes(), 8);
  EXPECT_EQ(a.param_digest(), b.param_digest());
  EXPECT_NE(a.param_digest(), c.param_digest());
  EXPECT_EQ(a.RecomputeDigest(), a.param_digest());
}

TEST(Pretrain, ChannelMismatchIsConfigError) {
  DatasetDescriptor d = testing::ToyBase();
  d.dims = {1, 32, 32};
  d.num_samples = 16;
  ArchConfig arch;  // expects 3 channels
  EXPECT_VPLEAK_ERROR(PretrainBase(d, arch, 7, "x"), ErrorCode::kConfig);
}

TEST(Pretrain, UnknownArchitecture) {
  EXPECT_VPLEAK_ERROR(BuildArchitecture("resnet-9000", {3, 32, 32}, 8), ErrorCode::kConfig);
  for (const std::string& name : RegisteredArchitectures()) {
    EXPECT_EQ(BuildArchitecture(name, {3, 32, 32}, 8).OutputSize(), 8) << name;
  }
}

TEST(Forward, SoftmaxSumsToOneAndDeterministic) {
  const FrozenClassifier& model = ToyModel();
  const Dataset& data = ToyData();
  const std::vector<Vector> batch(data.images.begin(), data.images.begin() + 10);
  const std::vector<Vector> logits = model.Forward(batch);
  ASSERT_EQ(logits.size(), 10u);
  for (const Vector& l : logits) {
    ASSERT_EQ(l.size(), 8);
    EXPECT_NEAR(nn::Softmax(l).sum(), 1.0, 1e-6);
  }
  const Vector again = model.Forward(batch[3]);
  EXPECT_TRUE((again.array() == logits[3].array()).all());
}

TEST(Forward, EmptyBatchAndShapeErrors) {
  EXPECT_TRUE(ToyModel().Forward(std::span<const Vector>{}).empty());
  EXPECT_VPLEAK_ERROR(ToyModel().Forward(Vector::Zero(10)), ErrorCode::kInput);
}

double LossAt(const Vector& image, const Vector& prompt, const PromptSpec& spec, int label) {
  return RunPromptedSample(ToyModel(), image, prompt, spec, LabelMap{4}, label, false).loss;
}

// Central differences, step 1e-3, 10 random border coordinates x 5 prompts.
TEST(InputGradient, MatchesFiniteDifferences) {
  const PromptSpec spec = ToySpec(4);
  const std::vector<int> border = BorderIndices(spec);
  const Dataset& data = ToyData();
  std::mt19937_64 rng(42);
  for (int k = 0; k < 5; ++k) {
    const Prompt prompt = testing::RandomPrompt(spec, 100 + k, 0.3);
    const size_t s = std::uniform_int_distribution<size_t>(0, data.size() - 1)(rng);
    const Vector grad =
        InputGradient(ToyModel(), data.images[s], prompt, LabelMap{4}, data.labels[s]);
    for (int t = 0; t < 10; ++t) {
      const int i = border[std::uniform_int_distribution<size_t>(0, border.size() - 1)(rng)];
      Vector plus = prompt.AsVector(), minus = prompt.AsVector();
      plus[i] += 1e-3;
      minus[i] -= 1e-3;
      const double fd = (LossAt(data.images[s], plus, spec, data.labels[s]) -
                         LossAt(data.images[s], minus, spec, data.labels[s])) /
                        2e-3;
      const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
      EXPECT_LT(std::abs(fd - grad[i]) / scale, 1e-2)
          << "prompt " << k << " index " << i << " analytic " << grad[i] << " fd " << fd;
    }
  }
}

TEST(InputGradient, ZeroOffBorder) {
  const PromptSpec spec = ToySpec(4);
  const Prompt prompt = testing::RandomPrompt(spec, 5);
  const Vector grad =
      InputGradient(ToyModel(), ToyData().images[0], prompt, LabelMap{4}, ToyData().labels[0]);
  for (int c = 0; c < 3; ++c) {
    for (int h = 4; h < 28; ++h) {
      for (int w = 4; w < 28; ++w) EXPECT_EQ(grad[spec.dims.Index(c, h, w)], 0.0);
    }
  }
  EXPECT_GT(grad.norm(), 0.0);
}

TEST(InputGradient, LabelOutOfRange) {
  const Prompt prompt = Prompt::Zero(ToySpec());
  EXPECT_VPLEAK_ERROR(InputGradient(ToyModel(), ToyData().images[0], prompt, LabelMap{4}, 4),
                      ErrorCode::kInput);
  EXPECT_VPLEAK_ERROR(InputGradient(ToyModel(), ToyData().images[0], prompt, LabelMap{4}, -1),
                      ErrorCode::kInput);
}

TEST(PromptedPass, LossIsNegLogPosterior) {
  const Prompt prompt = testing::RandomPrompt(ToySpec(), 8);
  for (int s = 0; s < 5; ++s) {
    const PromptedPass pass = RunPromptedSample(ToyModel(), ToyData().images[s],
                                                prompt.AsVector(), prompt.spec, LabelMap{4},
                                                ToyData().labels[s], false);
    EXPECT_NEAR(pass.loss, -std::log(pass.posterior[ToyData().labels[s]]), 1e-9);
    EXPECT_NEAR(pass.posterior.sum(), 1.0, 1e-12);
  }
}

TEST(Registry, RoundTripAndMissing) {
  const auto dir = testing::TempDir("registry");
  const ModelRegistry registry(dir);
  EXPECT_FALSE(registry.Contains("toy"));
  EXPECT_VPLEAK_ERROR(registry.Get("toy"), ErrorCode::kRegistry);
  registry.Put(ToyModel());
  EXPECT_TRUE(registry.Contains("toy"));
  const FrozenClassifier back = registry.Get("toy");
  EXPECT_EQ(back.param_digest(), ToyModel().param_digest());
  EXPECT_EQ(back.RecomputeDigest(), ToyModel().param_digest());
  EXPECT_EQ(back.arch_name(), ToyModel().arch_name());
  EXPECT_EQ(registry.List(), std::vector<std::string>{"toy"});
  const Vector x = ToyData().images[2];
  EXPECT_TRUE((back.Forward(x).array() == ToyModel().Forward(x).array()).all());
}

TEST(Registry, TamperedBlobRejected) {
  const auto dir = testing::TempDir("registry_tamper");
  const ModelRegistry registry(dir);
  registry.Put(ToyModel());
  auto bytes = ReadBinaryFile(dir / "toy.bin");
  bytes[bytes.size() / 2] ^= 0x01;
  WriteBinaryFile(dir / "toy.bin", bytes);
  EXPECT_VPLEAK_ERROR(registry.Get("toy"), ErrorCode::kRegistry);
}

TEST(Data, DeterministicAndSubset) {
  const Dataset a = GenerateDataset(testing::ToyDownstream(50));
  const Dataset b = GenerateDataset(testing::ToyDownstream(50));
  ASSERT_EQ(a.size(), 50u);
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE((a.images[i].array() == b.images[i].array()).all());
    EXPECT_EQ(a.labels[i], b.labels[i]);
    EXPECT_GE(a.images[i].minCoeff(), 0.0);
    EXPECT_LE(a.images[i].maxCoeff(), 1.0);
  }
  const std::vector<size_t> idx = {4, 9};
  const Dataset s = Subset(a, idx);
  EXPECT_EQ(s.ids, (std::vector<int64_t>{a.ids[4], a.ids[9]}));
  EXPECT_VPLEAK_ERROR(a.AttributeIndex("beard"), ErrorCode::kConfig);
  const std::vector<size_t> bad = {50};
  EXPECT_VPLEAK_ERROR(Subset(a, bad), ErrorCode::kInput);
}

TEST(Data, ResizeKeepsConstantImages) {
  const Vector img = Vector::Constant(3 * 8 * 8, 0.25);
  const Vector out = ResizeImage(img, {3, 8, 8}, {3, 16, 16});
  ASSERT_EQ(out.size(), 3 * 16 * 16);
  EXPECT_NEAR(out.minCoeff(), 0.25, 1e-12);
  EXPECT_NEAR(out.maxCoeff(), 0.25, 1e-12);
}

}  // namespace
}  // namespace vpleak
