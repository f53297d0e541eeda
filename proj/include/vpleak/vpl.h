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

// Visual prompt learning against a frozen classifier.

#ifndef VPLEAK_VPL_H_
#define VPLEAK_VPL_H_

#include <cstdint>
#include <string>
#include <vector>

#include "vpleak/data.h"
#include "vpleak/model_zoo.h"
#include "vpleak/prompt.h"

namespace vpleak {

struct PromptHyper {
  int epochs = 50;
  double learning_rate = 40.0;
  std::string schedule = "cosine";  // cosine | constant
  int batch_size = 64;
  uint64_t seed = 0;
};

// Learning rate at optimizer step `step` of `total_steps`. Cosine anneals
// from the base rate to 0.
double ScheduledLearningRate(const PromptHyper& hyper, int64_t step,
                             int64_t total_steps);

// Minimizes mean cross-entropy over mapped logits with minibatch SGD on the
// border cells only; the model is never modified. Starts from the zero
// prompt. Fills every provenance field except `condition`.
//
// Throws kInput on an empty training set and kTraining (naming the epoch)
// when the loss becomes non-finite.
Prompt TrainPrompt(const FrozenClassifier& model, const Dataset& train_set,
                   const PromptSpec& spec, const LabelMap& label_map,
                   const PromptHyper& hyper);

// argmax of the mapped logits of each prompted image.
std::vector<int> PredictWithPrompt(const FrozenClassifier& model,
                                   const Prompt& prompt,
                                   const LabelMap& label_map,
                                   const Dataset& eval_set);

// Fraction of samples whose prompted prediction equals the label.
double EvaluatePrompt(const FrozenClassifier& model, const Prompt& prompt,
                      const LabelMap& label_map, const Dataset& eval_set);

}  // namespace vpleak

#endif  // VPLEAK_VPL_H_
