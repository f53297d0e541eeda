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

// Property inference: prompts trained on subsets with known properties are
// fed to an image classifier that learns to read the property back.

#ifndef VPLEAK_PIA_H_
#define VPLEAK_PIA_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vpleak/data.h"
#include "vpleak/model_zoo.h"
#include "vpleak/nn.h"
#include "vpleak/prompt.h"
#include "vpleak/sampler.h"
#include "vpleak/vpl.h"

namespace vpleak {

// Properties, their candidate condition values, and which one is attacked.
struct PiaTask {
  std::vector<PropertySpec> properties;
  std::vector<std::vector<double>> values;  // per property
  int target_property = 0;
  int64_t subset_size = 0;  // N when no size property is present

  void Validate() const;
  int num_labels() const { return static_cast<int>(values.at(target_property).size()); }
};

struct SamplingFunction {
  std::vector<double> condition;  // one value per property
  int label = 0;                  // index of the target property's value
};

// Full cross-product of condition values (mixed setting), ordered
// lexicographically by value index with the first property outermost.
std::vector<SamplingFunction> EnumerateSamplingFunctions(const PiaTask& task);

// Deterministic 64-bit seed for job `index` under `seed`.
uint64_t DeriveSeed(uint64_t seed, uint64_t index);

struct PromptSet {
  std::string role;  // shadow | target
  std::vector<Prompt> prompts;
  std::vector<int> labels;
  std::vector<SamplingPlan> plans;
  std::vector<uint64_t> subset_seeds;
  std::vector<std::vector<size_t>> subsets;  // dataset indices per prompt

  size_t size() const { return prompts.size(); }
};

struct PromptJobConfig {
  PromptSpec spec;
  LabelMap label_map;
  PromptHyper hyper;  // hyper.seed is replaced per job
  int jobs = 1;
};

// Trains runs_per_function prompts for every sampling function. Job i
// covers function i / runs and run i % runs; its subset and training seeds
// derive from (seed, i), so the result does not depend on `jobs`.
PromptSet GeneratePromptSet(const FrozenClassifier& model, const Dataset& dataset,
                            std::span<const size_t> pool, const PiaTask& task,
                            std::span<const SamplingFunction> functions,
                            int runs_per_function, const PromptJobConfig& config,
                            const std::string& role, uint64_t seed);

// Copies the prompt grid into the top-left corner of a zero canvas.
// Throws kEncoding if the prompt does not fit.
Vector EncodeCanvas(const Prompt& prompt, const Dims& canvas_dims);

struct PiaHyper {
  Dims canvas_dims{3, 32, 32};
  int epochs = 100;
  double learning_rate = 1e-3;
  int batch_size = 32;
  uint64_t seed = 0;
};

class PiaAttackModel {
 public:
  PiaAttackModel(nn::Network network, Dims canvas_dims, double input_scale,
                 int num_labels);

  // Throws kInput if the prompt does not fit the canvas.
  int Infer(const Prompt& prompt) const;
  Vector Logits(const Prompt& prompt) const;
  std::string digest() const { return nn::ParamDigest(network_); }
  int num_labels() const { return num_labels_; }

 private:
  nn::Network network_;
  Dims canvas_dims_;
  double input_scale_;
  int num_labels_;
};

// Small CNN trained with cross-entropy and Adam on the shadow canvases.
// Throws kTraining when fewer than two labels are present.
PiaAttackModel TrainPiaModel(const PromptSet& shadow, int num_labels,
                             const PiaHyper& hyper);

// Fraction of target prompts whose inferred label is correct. Throws kInput
// on an empty set.
double EvaluatePia(const PiaAttackModel& model, const PromptSet& target);

// Writes <dir>/<role>_NNNNN.vppr files plus <dir>/<role>_manifest.json.
void WritePromptSet(const std::filesystem::path& dir, const PromptSet& set);
PromptSet ReadPromptSet(const std::filesystem::path& dir, const std::string& role);

// Mean utility of a prompt set on an evaluation split.
double MeanUtility(const FrozenClassifier& model, const PromptSet& set,
                   const LabelMap& label_map, const Dataset& eval_set);

}  // namespace vpleak

#endif  // VPLEAK_PIA_H_
