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

#include "vpleak/vpl.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "vpleak/error.h"

namespace vpleak {

double ScheduledLearningRate(const PromptHyper& hyper, int64_t step,
                             int64_t total_steps) {
  if (hyper.schedule == "constant") return hyper.learning_rate;
  Require(hyper.schedule == "cosine", ErrorCode::kConfig,
          "unknown learning-rate schedule '" + hyper.schedule + "'");
  if (total_steps <= 0) return hyper.learning_rate;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * hyper.learning_rate * (1.0 + std::cos(std::numbers::pi * t));
}

Prompt TrainPrompt(const FrozenClassifier& model, const Dataset& train_set,
                   const PromptSpec& spec, const LabelMap& label_map,
                   const PromptHyper& hyper) {
  ValidatePromptSpec(spec);
  Require(train_set.size() > 0, ErrorCode::kInput, "empty prompt training set");
  Require(spec.dims == model.input_dims(), ErrorCode::kInput,
          "prompt dims " + ToString(spec.dims) + " do not match model '" +
              model.model_id() + "' input " + ToString(model.input_dims()));
  Require(hyper.epochs >= 0 && hyper.batch_size > 0, ErrorCode::kConfig,
          "invalid prompt epochs or batch size");
  label_map.Validate(model.num_classes());
  // Validates the schedule name up front.
  ScheduledLearningRate(hyper, 0, 1);

  const std::vector<Vector> images = PrepareImages(train_set, model.input_dims());
  const size_t n = images.size();
  const int64_t steps_per_epoch =
      static_cast<int64_t>((n + hyper.batch_size - 1) / hyper.batch_size);
  const int64_t total_steps = steps_per_epoch * hyper.epochs;

  Vector prompt = Vector::Zero(spec.dims.size());
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(hyper.seed);
  int64_t step = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < n; start += hyper.batch_size) {
      const size_t end = std::min(n, start + hyper.batch_size);
      Vector grad = Vector::Zero(prompt.size());
      double loss = 0.0;
      for (size_t k = start; k < end; ++k) {
        const size_t i = order[k];
        PromptedPass pass = RunPromptedSample(model, images[i], prompt, spec,
                                              label_map, train_set.labels[i], true);
        loss += pass.loss;
        grad += pass.prompt_grad;
      }
      if (!std::isfinite(loss) || !grad.allFinite()) {
        Fail(ErrorCode::kTraining,
             "prompt training diverged at epoch " + std::to_string(epoch));
      }
      const double lr = ScheduledLearningRate(hyper, step, total_steps);
      prompt -= (lr / static_cast<double>(end - start)) * grad;
      ++step;
    }
  }
  Require(prompt.allFinite(), ErrorCode::kTraining,
          "prompt training produced non-finite values");

  Prompt out = Prompt::Zero(spec);
  for (Eigen::Index i = 0; i < prompt.size(); ++i) {
    out.values[i] = static_cast<float>(prompt[i]);
  }
  out.provenance.model_id = model.model_id();
  out.provenance.dataset = train_set.name;
  out.provenance.train_size = static_cast<int64_t>(n);
  out.provenance.epochs = hyper.epochs;
  out.provenance.seed = hyper.seed;
  out.provenance.learning_rate = hyper.learning_rate;
  out.provenance.schedule = hyper.schedule;
  out.provenance.batch_size = hyper.batch_size;
  return out;
}

std::vector<int> PredictWithPrompt(const FrozenClassifier& model,
                                   const Prompt& prompt,
                                   const LabelMap& label_map,
                                   const Dataset& eval_set) {
  label_map.Validate(model.num_classes());
  const std::vector<Vector> images = PrepareImages(eval_set, model.input_dims());
  std::vector<int> out;
  out.reserve(images.size());
  for (const Vector& x : images) {
    const Vector logits = model.Forward(ApplyPrompt(x, model.input_dims(), prompt));
    out.push_back(nn::Argmax(MapLogits(logits, label_map)));
  }
  return out;
}

double EvaluatePrompt(const FrozenClassifier& model, const Prompt& prompt,
                      const LabelMap& label_map, const Dataset& eval_set) {
  Require(eval_set.size() > 0, ErrorCode::kInput, "empty evaluation set");
  const std::vector<int> predicted = PredictWithPrompt(model, prompt, label_map, eval_set);
  size_t correct = 0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] == eval_set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

}  // namespace vpleak
