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

#include <random>

#include <gtest/gtest.h>

#include "test_support.h"
#include "vpleak/io.h"
#include "vpleak/prompt.h"

namespace vpleak {
namespace {

// Counts border cells by walking the four strips, independent of IsBorderCell.
int64_t StripCount(int c, int h, int w, int p) {
  int64_t per_channel = 2 * static_cast<int64_t>(p) * w;  // top and bottom rows
  per_channel += 2 * static_cast<int64_t>(p) * (h - 2 * p);  // left and right columns
  return per_channel * c;
}

TEST(ParamCount, LargeImagePrompt) {
  PromptSpec spec;
  spec.prompt_size = 30;
  spec.dims = {3, 224, 224};
  EXPECT_EQ(ParamCount(spec), 69840);
}

TEST(ParamCount, SmallPromptMatchesEnumeration) {
  const PromptSpec spec = testing::ToySpec(4);
  EXPECT_EQ(ParamCount(spec), 1344);
  EXPECT_EQ(static_cast<int64_t>(BorderIndices(spec).size()), 1344);
}

TEST(ParamCount, RandomSpecsMatchStrips) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int h = std::uniform_int_distribution<int>(3, 64)(rng);
    const int w = std::uniform_int_distribution<int>(3, 64)(rng);
    const int c = std::uniform_int_distribution<int>(1, 4)(rng);
    const int p = std::uniform_int_distribution<int>(1, (std::min(h, w) - 1) / 2)(rng);
    PromptSpec spec;
    spec.prompt_size = p;
    spec.dims = {c, h, w};
    EXPECT_EQ(ParamCount(spec), StripCount(c, h, w, p)) << h << "x" << w << " p=" << p;
    EXPECT_EQ(static_cast<int64_t>(BorderIndices(spec).size()), ParamCount(spec));
  }
}

TEST(ParamCount, DegenerateSpecsRejected) {
  PromptSpec spec = testing::ToySpec(4);
  spec.prompt_size = 0;
  EXPECT_VPLEAK_ERROR(ParamCount(spec), ErrorCode::kSpec);
  spec.prompt_size = 16;  // p >= min(H, W) / 2
  EXPECT_VPLEAK_ERROR(ParamCount(spec), ErrorCode::kSpec);
  spec.prompt_size = 4;
  spec.template_kind = "patch";
  EXPECT_VPLEAK_ERROR(ParamCount(spec), ErrorCode::kSpec);
}

TEST(ApplyPrompt, ZeroPromptIsIdentity) {
  const Dataset& data = testing::ToyData();
  const Prompt zero = Prompt::Zero(testing::ToySpec());
  const Vector out = ApplyPrompt(data.images[0], data.dims, zero);
  EXPECT_TRUE((out.array() == data.images[0].array()).all());
}

TEST(ApplyPrompt, InteriorUntouched) {
  const Dataset& data = testing::ToyData();
  const PromptSpec spec = testing::ToySpec(6);
  const Prompt prompt = testing::RandomPrompt(spec, 3);
  const Vector out = ApplyPrompt(data.images[1], data.dims, prompt);
  for (int c = 0; c < 3; ++c) {
    for (int h = 6; h < 26; ++h) {
      for (int w = 6; w < 26; ++w) {
        const int i = spec.dims.Index(c, h, w);
        EXPECT_EQ(out[i], data.images[1][i]);
      }
    }
  }
}

TEST(ApplyPrompt, ConstantBorderOnBlackImage) {
  const PromptSpec spec = testing::ToySpec(4);
  Prompt prompt = Prompt::Zero(spec);
  for (int i : BorderIndices(spec)) prompt.values[i] = 0.5f;
  const Vector out = ApplyPrompt(Vector::Zero(spec.dims.size()), spec.dims, prompt);
  for (int c = 0; c < 3; ++c) {
    for (int h = 0; h < 32; ++h) {
      for (int w = 0; w < 32; ++w) {
        const bool border = h < 4 || h >= 28 || w < 4 || w >= 28;
        EXPECT_EQ(out[spec.dims.Index(c, h, w)], border ? 0.5 : 0.0);
      }
    }
  }
}

TEST(ApplyPrompt, DimsMismatch) {
  const Prompt prompt = Prompt::Zero(testing::ToySpec());
  EXPECT_VPLEAK_ERROR(ApplyPrompt(Vector::Zero(16 * 16 * 3), {3, 16, 16}, prompt),
                      ErrorCode::kInput);
}

TEST(CheckBorderSupport, RejectsInteriorMass) {
  Prompt prompt = Prompt::Zero(testing::ToySpec());
  CheckBorderSupport(prompt);
  prompt.values[prompt.spec.dims.Index(0, 16, 16)] = 1e-3f;
  EXPECT_VPLEAK_ERROR(CheckBorderSupport(prompt), ErrorCode::kInput);
}

TEST(MapLogits, FirstNSelection) {
  Vector logits(1000);
  for (int i = 0; i < 1000; ++i) logits[i] = i;
  const Vector mapped = MapLogits(logits, LabelMap{8});
  ASSERT_EQ(mapped.size(), 8);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(mapped[i], i);
  logits.tail(992).setConstant(-7.0);
  EXPECT_TRUE((MapLogits(logits, LabelMap{8}).array() == mapped.array()).all());
}

TEST(MapLogits, FullMapIsIdentity) {
  const Vector logits = Vector::LinSpaced(8, -1.0, 2.0);
  EXPECT_TRUE((MapLogits(logits, LabelMap{8}).array() == logits.array()).all());
}

TEST(MapLogits, TooManyDownstreamClasses) {
  EXPECT_VPLEAK_ERROR(MapLogits(Vector::Zero(4), LabelMap{5}), ErrorCode::kMapping);
  EXPECT_VPLEAK_ERROR(LabelMap{0}.Validate(4), ErrorCode::kMapping);
}

TEST(PromptFile, RoundTripIsLossless) {
  Prompt prompt = testing::RandomPrompt(testing::ToySpec(5), 11);
  prompt.provenance.model_id = "m";
  prompt.provenance.dataset = "d";
  prompt.provenance.train_size = 64;
  prompt.provenance.condition = {{"male", 0.2}, {"size", 64}};
  prompt.provenance.epochs = 9;
  prompt.provenance.seed = 1234567890123ULL;
  prompt.provenance.learning_rate = 10;
  prompt.provenance.schedule = "cosine";
  prompt.provenance.batch_size = 64;
  const std::vector<uint8_t> bytes = EncodePromptFile(prompt);
  EXPECT_EQ(DecodePromptFile(bytes), prompt);
  EXPECT_EQ(EncodePromptFile(DecodePromptFile(bytes)), bytes);

  const auto dir = testing::TempDir("prompt_file");
  WritePromptFile(dir / "p.vppr", prompt);
  EXPECT_EQ(ReadPromptFile(dir / "p.vppr"), prompt);
}

TEST(PromptFile, CorruptInputRejected) {
  std::vector<uint8_t> bytes = EncodePromptFile(Prompt::Zero(testing::ToySpec()));
  bytes[0] ^= 0xff;
  EXPECT_VPLEAK_ERROR(DecodePromptFile(bytes), ErrorCode::kIo);
  bytes = EncodePromptFile(Prompt::Zero(testing::ToySpec()));
  bytes.pop_back();
  EXPECT_VPLEAK_ERROR(DecodePromptFile(bytes), ErrorCode::kIo);
}

TEST(Sha256, KnownVector) {
  const std::string abc = "abc";
  EXPECT_EQ(Sha256Hex({reinterpret_cast<const uint8_t*>(abc.data()), abc.size()}),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(FormatDecimal, FourPlaces) {
  EXPECT_EQ(FormatDecimal(0.825), "0.8250");
  EXPECT_EQ(FormatDecimal(1.0), "1.0000");
  EXPECT_EQ(FormatDecimal(-0.0), "0.0000");
}

}  // namespace
}  // namespace vpleak
