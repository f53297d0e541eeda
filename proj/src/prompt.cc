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

#include "vpleak/prompt.h"

#include <algorithm>

#include "json.hpp"
#include "vpleak/error.h"
#include "vpleak/io.h"

namespace vpleak {
namespace {

constexpr char kPromptMagic[] = "VPPR";

nlohmann::json SpecToJson(const PromptSpec& spec) {
  return {{"template", spec.template_kind},
          {"prompt_size", spec.prompt_size},
          {"channels", spec.dims.channels},
          {"height", spec.dims.height},
          {"width", spec.dims.width}};
}

PromptSpec SpecFromJson(const nlohmann::json& j) {
  PromptSpec spec;
  spec.template_kind = j.at("template").get<std::string>();
  spec.prompt_size = j.at("prompt_size").get<int>();
  spec.dims = {j.at("channels").get<int>(), j.at("height").get<int>(),
               j.at("width").get<int>()};
  return spec;
}

}  // namespace

void ValidatePromptSpec(const PromptSpec& spec) {
  Require(spec.template_kind == "padding", ErrorCode::kSpec,
          "unsupported prompt template '" + spec.template_kind + "'");
  Require(spec.dims.channels > 0 && spec.dims.height > 0 && spec.dims.width > 0,
          ErrorCode::kSpec, "prompt dims must be positive");
  Require(spec.prompt_size > 0, ErrorCode::kSpec,
          "prompt size must be positive, got " + std::to_string(spec.prompt_size));
  Require(2 * spec.prompt_size < std::min(spec.dims.height, spec.dims.width),
          ErrorCode::kSpec,
          "prompt size " + std::to_string(spec.prompt_size) +
              " leaves no interior in " + ToString(spec.dims));
}

int64_t ParamCount(const PromptSpec& spec) {
  ValidatePromptSpec(spec);
  const int64_t p = spec.prompt_size;
  return 2 * spec.dims.channels * p * (spec.dims.height + spec.dims.width - 2 * p);
}

bool IsBorderCell(const PromptSpec& spec, int h, int w) {
  const int p = spec.prompt_size;
  return h < p || h >= spec.dims.height - p || w < p || w >= spec.dims.width - p;
}

std::vector<int> BorderIndices(const PromptSpec& spec) {
  std::vector<int> out;
  for (int c = 0; c < spec.dims.channels; ++c) {
    for (int h = 0; h < spec.dims.height; ++h) {
      for (int w = 0; w < spec.dims.width; ++w) {
        if (IsBorderCell(spec, h, w)) out.push_back(spec.dims.Index(c, h, w));
      }
    }
  }
  return out;
}

Prompt Prompt::Zero(const PromptSpec& spec) {
  ValidatePromptSpec(spec);
  Prompt p;
  p.spec = spec;
  p.values.assign(spec.dims.size(), 0.0f);
  return p;
}

Vector Prompt::AsVector() const {
  Vector v(values.size());
  for (size_t i = 0; i < values.size(); ++i) v[i] = values[i];
  return v;
}

void CheckBorderSupport(const Prompt& prompt) {
  ValidatePromptSpec(prompt.spec);
  const Dims& d = prompt.spec.dims;
  Require(static_cast<int>(prompt.values.size()) == d.size(), ErrorCode::kInput,
          "prompt grid has " + std::to_string(prompt.values.size()) +
              " values, expected " + std::to_string(d.size()));
  for (int c = 0; c < d.channels; ++c) {
    for (int h = 0; h < d.height; ++h) {
      for (int w = 0; w < d.width; ++w) {
        if (!IsBorderCell(prompt.spec, h, w) && prompt.values[d.Index(c, h, w)] != 0.0f) {
          Fail(ErrorCode::kInput, "prompt has nonzero interior cell at (" +
                                      std::to_string(c) + "," + std::to_string(h) +
                                      "," + std::to_string(w) + ")");
        }
      }
    }
  }
}

void LabelMap::Validate(int num_pretrained) const {
  Require(num_downstream > 0, ErrorCode::kMapping,
          "label map needs at least one downstream class");
  Require(num_downstream <= num_pretrained, ErrorCode::kMapping,
          std::to_string(num_downstream) + " downstream classes exceed " +
              std::to_string(num_pretrained) + " pre-trained classes");
}

Vector ApplyPrompt(const Vector& image, const Dims& image_dims,
                   const Prompt& prompt) {
  Require(image_dims == prompt.spec.dims && image.size() == image_dims.size(),
          ErrorCode::kInput,
          "image dims " + ToString(image_dims) + " do not match prompt dims " +
              ToString(prompt.spec.dims));
  Vector out = image;
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] += prompt.values[i];
  return out;
}

Vector MapLogits(const Vector& logits, const LabelMap& label_map) {
  label_map.Validate(static_cast<int>(logits.size()));
  return logits.head(label_map.num_downstream);
}

std::vector<uint8_t> EncodePromptFile(const Prompt& prompt) {
  CheckBorderSupport(prompt);
  const Provenance& pv = prompt.provenance;
  nlohmann::json header = {
      {"format_version", kPromptFormatVersion},
      {"spec", SpecToJson(prompt.spec)},
      {"provenance",
       {{"model_id", pv.model_id},
        {"dataset", pv.dataset},
        {"train_size", pv.train_size},
        {"condition", pv.condition},
        {"epochs", pv.epochs},
        {"seed", pv.seed},
        {"learning_rate", pv.learning_rate},
        {"schedule", pv.schedule},
        {"batch_size", pv.batch_size}}}};
  const std::string text = header.dump();
  ByteWriter w;
  w.Bytes(std::string_view(kPromptMagic, 4));
  w.U32(kPromptFormatVersion);
  w.U32(static_cast<uint32_t>(text.size()));
  w.Bytes(text);
  for (float v : prompt.values) w.F32(v);
  return w.bytes();
}

Prompt DecodePromptFile(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  Require(r.remaining() >= 4 && r.Bytes(4) == std::string_view(kPromptMagic, 4),
          ErrorCode::kIo, "not a prompt file");
  const uint32_t version = r.U32();
  Require(version == kPromptFormatVersion, ErrorCode::kIo,
          "unsupported prompt format version " + std::to_string(version));
  const uint32_t header_len = r.U32();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.Bytes(header_len));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, std::string("bad prompt header: ") + e.what());
  }
  Prompt prompt;
  try {
    prompt.spec = SpecFromJson(header.at("spec"));
    const auto& pv = header.at("provenance");
    prompt.provenance.model_id = pv.at("model_id").get<std::string>();
    prompt.provenance.dataset = pv.at("dataset").get<std::string>();
    prompt.provenance.train_size = pv.at("train_size").get<int64_t>();
    prompt.provenance.condition =
        pv.at("condition").get<std::map<std::string, double>>();
    prompt.provenance.epochs = pv.at("epochs").get<int>();
    prompt.provenance.seed = pv.at("seed").get<uint64_t>();
    prompt.provenance.learning_rate = pv.at("learning_rate").get<double>();
    prompt.provenance.schedule = pv.at("schedule").get<std::string>();
    prompt.provenance.batch_size = pv.at("batch_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, std::string("bad prompt header: ") + e.what());
  }
  ValidatePromptSpec(prompt.spec);
  const size_t n = static_cast<size_t>(prompt.spec.dims.size());
  Require(r.remaining() == 4 * n, ErrorCode::kIo, "prompt grid size mismatch");
  prompt.values.resize(n);
  for (size_t i = 0; i < n; ++i) prompt.values[i] = r.F32();
  CheckBorderSupport(prompt);
  return prompt;
}

void WritePromptFile(const std::filesystem::path& path, const Prompt& prompt) {
  WriteBinaryFile(path, EncodePromptFile(prompt));
}

Prompt ReadPromptFile(const std::filesystem::path& path) {
  return DecodePromptFile(ReadBinaryFile(path));
}

}  // namespace vpleak
