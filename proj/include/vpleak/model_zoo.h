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

// Frozen image classifiers: small convolutional surrogates for large
// pre-trained backbones, their deterministic pre-training, and a registry
// directory that persists them.

#ifndef VPLEAK_MODEL_ZOO_H_
#define VPLEAK_MODEL_ZOO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vpleak/data.h"
#include "vpleak/nn.h"
#include "vpleak/prompt.h"

namespace vpleak {

struct ArchConfig {
  std::string arch_name = "cnn-small";
  Dims input_dims{3, 32, 32};
  int num_classes = 8;
  int epochs = 8;
  double learning_rate = 2e-3;
  int batch_size = 32;
};

// Names accepted by BuildArchitecture.
std::vector<std::string> RegisteredArchitectures();

nn::Network BuildArchitecture(const std::string& arch_name, const Dims& dims,
                              int num_classes);

// Immutable after construction; safe to share across threads.
class FrozenClassifier {
 public:
  FrozenClassifier(std::string model_id, std::string arch_name, Dims input_dims,
                   int num_classes, uint64_t seed, nn::Network network);

  const std::string& model_id() const { return model_id_; }
  const std::string& arch_name() const { return arch_name_; }
  const Dims& input_dims() const { return input_dims_; }
  int num_classes() const { return num_classes_; }
  uint64_t seed() const { return seed_; }
  const std::string& param_digest() const { return param_digest_; }
  const nn::Network& network() const { return network_; }

  std::string RecomputeDigest() const { return nn::ParamDigest(network_); }

  // Logits (length K).
  Vector Forward(const Vector& image) const;
  std::vector<Vector> Forward(std::span<const Vector> batch) const;

 private:
  std::string model_id_;
  std::string arch_name_;
  Dims input_dims_;
  int num_classes_;
  uint64_t seed_;
  nn::Network network_;
  std::string param_digest_;
};

// Trains a surrogate from scratch on a generated dataset. Throws kConfig on
// channel mismatch between data and architecture.
FrozenClassifier PretrainBase(const DatasetDescriptor& data,
                              const ArchConfig& config, uint64_t seed,
                              const std::string& model_id);

// Resizes dataset images to the model's spatial input dims.
std::vector<Vector> PrepareImages(const Dataset& dataset, const Dims& model_dims);

// One prompted forward (and optionally backward) pass of a single sample
// under cross-entropy over the mapped logits.
struct PromptedPass {
  Vector posterior;     // softmax over the n mapped logits
  double loss = 0.0;    // -ln posterior[label]
  Vector prompt_grad;   // dLoss/dPrompt over the full grid, zero off-border
};

PromptedPass RunPromptedSample(const FrozenClassifier& model,
                               const Vector& image, const Vector& prompt_values,
                               const PromptSpec& spec, const LabelMap& label_map,
                               int label, bool need_grad);

// Gradient of the cross-entropy loss w.r.t. the prompt grid. Entries off the
// border are exactly zero. Throws kInput when the label is out of range.
Vector InputGradient(const FrozenClassifier& model, const Vector& image,
                     const Prompt& prompt, const LabelMap& label_map,
                     int true_label);

// Directory of `<id>.json` metadata plus `<id>.bin` parameter blobs. Blob:
// "VPLW", u32 version, u32 array count, (u32 rows, u32 cols) per array, then
// each array's values row-major as little-endian float32.
class ModelRegistry {
 public:
  explicit ModelRegistry(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void Put(const FrozenClassifier& model) const;
  bool Contains(const std::string& model_id) const;
  // Throws kRegistry if missing or if the stored digest does not verify.
  FrozenClassifier Get(const std::string& model_id) const;
  std::vector<std::string> List() const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

}  // namespace vpleak

#endif  // VPLEAK_MODEL_ZOO_H_
