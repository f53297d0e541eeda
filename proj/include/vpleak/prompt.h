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

// Padding-template visual prompts: the learnable cells form a border of
// width p around the model-input image, every interior cell is zero.

#ifndef VPLEAK_PROMPT_H_
#define VPLEAK_PROMPT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vpleak/nn.h"

namespace vpleak {

struct PromptSpec {
  std::string template_kind = "padding";
  int prompt_size = 0;  // border width p in pixels
  Dims dims;

  bool operator==(const PromptSpec&) const = default;
};

// Throws kSpec unless 0 < p < min(H, W) / 2 for a padding template.
void ValidatePromptSpec(const PromptSpec& spec);

// 2 * C * p * (H + W - 2p).
int64_t ParamCount(const PromptSpec& spec);

bool IsBorderCell(const PromptSpec& spec, int h, int w);

// Flat CHW indices of the learnable cells, in ascending order.
std::vector<int> BorderIndices(const PromptSpec& spec);

struct Provenance {
  std::string model_id;
  std::string dataset;
  int64_t train_size = 0;
  std::map<std::string, double> condition;
  int epochs = 0;
  uint64_t seed = 0;
  double learning_rate = 0.0;
  std::string schedule;
  int batch_size = 0;

  bool operator==(const Provenance&) const = default;
};

struct Prompt {
  PromptSpec spec;
  std::vector<float> values;  // full CHW grid, zero off the border
  Provenance provenance;

  static Prompt Zero(const PromptSpec& spec);
  Vector AsVector() const;
  bool operator==(const Prompt&) const = default;
};

// Throws kInput if any interior cell is nonzero or the grid size is wrong.
void CheckBorderSupport(const Prompt& prompt);

// Hard-coded output mapping: downstream class i is pre-trained class i.
struct LabelMap {
  int num_downstream = 0;

  // Throws kMapping unless 0 < n <= num_pretrained.
  void Validate(int num_pretrained) const;
};

Vector ApplyPrompt(const Vector& image, const Dims& image_dims,
                   const Prompt& prompt);

// Keeps logits 0..n-1; the remaining pre-trained classes are dropped.
Vector MapLogits(const Vector& logits, const LabelMap& label_map);

// Prompt file: "VPPR" magic, u32 format version, u32 header length, JSON
// header (spec + provenance), then the CHW grid as little-endian float32.
inline constexpr uint32_t kPromptFormatVersion = 1;

std::vector<uint8_t> EncodePromptFile(const Prompt& prompt);
Prompt DecodePromptFile(std::span<const uint8_t> bytes);
void WritePromptFile(const std::filesystem::path& path, const Prompt& prompt);
Prompt ReadPromptFile(const std::filesystem::path& path);

}  // namespace vpleak

#endif  // VPLEAK_PROMPT_H_
