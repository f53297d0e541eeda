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

#include "vpleak/pia.h"

#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"
#include "vpleak/error.h"
#include "vpleak/io.h"
#include "vpleak/parallel.h"

namespace vpleak {

void PiaTask::Validate() const {
  Require(!properties.empty(), ErrorCode::kConfig, "PIA task has no properties");
  Require(values.size() == properties.size(), ErrorCode::kConfig,
          "every property needs a list of condition values");
  Require(target_property >= 0 && target_property < static_cast<int>(properties.size()),
          ErrorCode::kConfig, "target property index out of range");
  for (size_t i = 0; i < values.size(); ++i) {
    Require(!values[i].empty(), ErrorCode::kConfig,
            "property '" + properties[i].name + "' has no condition values");
    for (double v : values[i]) {
      if (properties[i].kind == PropertyKind::kProportion) {
        Require(v > 0.0 && v < 1.0, ErrorCode::kConfig,
                "proportion for '" + properties[i].name + "' must lie in (0, 1)");
      } else {
        Require(v >= 1 && v == std::floor(v), ErrorCode::kConfig,
                "size for '" + properties[i].name + "' must be a positive integer");
      }
    }
  }
}

std::vector<SamplingFunction> EnumerateSamplingFunctions(const PiaTask& task) {
  task.Validate();
  std::vector<SamplingFunction> out;
  std::vector<size_t> digit(task.properties.size(), 0);
  while (true) {
    SamplingFunction f;
    for (size_t i = 0; i < digit.size(); ++i) f.condition.push_back(task.values[i][digit[i]]);
    f.label = static_cast<int>(digit[task.target_property]);
    out.push_back(std::move(f));
    // Odometer increment, last property fastest.
    size_t i = digit.size();
    while (i > 0) {
      --i;
      if (++digit[i] < task.values[i].size()) break;
      digit[i] = 0;
      if (i == 0) return out;
    }
  }
}

uint64_t DeriveSeed(uint64_t seed, uint64_t index) {
  // splitmix64 finalizer over the pair.
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PromptSet GeneratePromptSet(const FrozenClassifier& model, const Dataset& dataset,
                            std::span<const size_t> pool, const PiaTask& task,
                            std::span<const SamplingFunction> functions,
                            int runs_per_function, const PromptJobConfig& config,
                            const std::string& role, uint64_t seed) {
  Require(runs_per_function >= 0, ErrorCode::kConfig, "negative runs per function");
  const size_t total = functions.size() * static_cast<size_t>(runs_per_function);
  PromptSet set;
  set.role = role;
  set.prompts.resize(total);
  set.labels.resize(total);
  set.plans.resize(total);
  set.subset_seeds.resize(total);
  set.subsets.resize(total);
  ParallelFor(total, config.jobs, [&](size_t i) {
    const SamplingFunction& f = functions[i / runs_per_function];
    const uint64_t job_seed = DeriveSeed(seed, i);
    SamplingPlan plan = MakePlan(task.properties, f.condition, task.subset_size);
    std::vector<size_t> subset = SampleSubset(dataset, pool, plan, job_seed);
    PromptHyper hyper = config.hyper;
    hyper.seed = DeriveSeed(job_seed, 0);
    Prompt prompt = TrainPrompt(model, Subset(dataset, subset), config.spec,
                                config.label_map, hyper);
    for (size_t k = 0; k < task.properties.size(); ++k) {
      prompt.provenance.condition[task.properties[k].name] = f.condition[k];
    }
    set.prompts[i] = std::move(prompt);
    set.labels[i] = f.label;
    set.plans[i] = std::move(plan);
    set.subset_seeds[i] = job_seed;
    set.subsets[i] = std::move(subset);
  });
  return set;
}

Vector EncodeCanvas(const Prompt& prompt, const Dims& canvas_dims) {
  const Dims& d = prompt.spec.dims;
  Require(d.channels == canvas_dims.channels && d.height <= canvas_dims.height &&
              d.width <= canvas_dims.width,
          ErrorCode::kEncoding,
          "prompt " + ToString(d) + " does not fit canvas " + ToString(canvas_dims));
  Require(prompt.values.size() == static_cast<size_t>(d.size()), ErrorCode::kEncoding,
          "prompt grid size does not match its spec");
  Vector canvas = Vector::Zero(canvas_dims.size());
  for (int c = 0; c < d.channels; ++c) {
    for (int h = 0; h < d.height; ++h) {
      for (int w = 0; w < d.width; ++w) {
        canvas[canvas_dims.Index(c, h, w)] = prompt.values[d.Index(c, h, w)];
      }
    }
  }
  return canvas;
}

namespace {

nn::Network BuildPiaNetwork(const Dims& in, int num_labels) {
  nn::Network net;
  auto conv1 = std::make_unique<nn::Conv2d>(in, 8, 3, 2, 1);
  const Dims d1 = conv1->output_dims();
  net.Add(std::move(conv1));
  net.Add(std::make_unique<nn::Relu>(d1.size()));
  auto conv2 = std::make_unique<nn::Conv2d>(d1, 16, 3, 2, 1);
  const Dims d2 = conv2->output_dims();
  net.Add(std::move(conv2));
  net.Add(std::make_unique<nn::Relu>(d2.size()));
  net.Add(std::make_unique<nn::Dense>(d2.size(), num_labels));
  return net;
}

}  // namespace

PiaAttackModel::PiaAttackModel(nn::Network network, Dims canvas_dims, double input_scale,
                               int num_labels)
    : network_(std::move(network)),
      canvas_dims_(canvas_dims),
      input_scale_(input_scale),
      num_labels_(num_labels) {}

Vector PiaAttackModel::Logits(const Prompt& prompt) const {
  Vector canvas;
  try {
    canvas = EncodeCanvas(prompt, canvas_dims_);
  } catch (const Error& e) {
    Fail(ErrorCode::kInput, e.message());
  }
  return network_.Forward(canvas * input_scale_);
}

int PiaAttackModel::Infer(const Prompt& prompt) const {
  return nn::Argmax(Logits(prompt));
}

PiaAttackModel TrainPiaModel(const PromptSet& shadow, int num_labels,
                             const PiaHyper& hyper) {
  const std::set<int> distinct(shadow.labels.begin(), shadow.labels.end());
  Require(distinct.size() >= 2, ErrorCode::kTraining,
          "property attack needs at least two distinct labels in the shadow set");
  Require(*distinct.rbegin() < num_labels && *distinct.begin() >= 0, ErrorCode::kTraining,
          "shadow label outside [0, num_labels)");
  std::vector<Vector> canvases;
  double sq = 0.0;
  double count = 0.0;
  for (const Prompt& p : shadow.prompts) {
    canvases.push_back(EncodeCanvas(p, hyper.canvas_dims));
    sq += canvases.back().squaredNorm();
    count += static_cast<double>(BorderIndices(p.spec).size());
  }
  // Unit RMS over the learnable cells.
  const double rms = count > 0 ? std::sqrt(sq / count) : 0.0;
  const double scale = rms > 0 ? 1.0 / rms : 1.0;
  for (Vector& c : canvases) c *= scale;
  nn::Network net = BuildPiaNetwork(hyper.canvas_dims, num_labels);
  net.Initialize(hyper.seed);
  nn::FitOptions opts;
  opts.epochs = hyper.epochs;
  opts.learning_rate = hyper.learning_rate;
  opts.batch_size = hyper.batch_size;
  opts.seed = DeriveSeed(hyper.seed, 1);
  nn::FitClassifier(net, canvases, shadow.labels, opts);
  net.RoundParamsToFloat();
  return PiaAttackModel(std::move(net), hyper.canvas_dims, scale, num_labels);
}

double EvaluatePia(const PiaAttackModel& model, const PromptSet& target) {
  Require(target.size() > 0, ErrorCode::kInput, "empty target prompt set");
  size_t correct = 0;
  for (size_t i = 0; i < target.size(); ++i) {
    if (model.Infer(target.prompts[i]) == target.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(target.size());
}

void WritePromptSet(const std::filesystem::path& dir, const PromptSet& set) {
  nlohmann::json entries = nlohmann::json::array();
  for (size_t i = 0; i < set.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05zu.vppr", set.role.c_str(), i);
    WritePromptFile(dir / name, set.prompts[i]);
    entries.push_back({{"file", name},
                       {"label", set.labels[i]},
                       {"plan", PlanToJson(set.plans[i])},
                       {"subset_seed", set.subset_seeds[i]},
                       {"indices", set.subsets[i]}});
  }
  nlohmann::json manifest = {{"role", set.role}, {"prompts", entries}};
  WriteTextFile(dir / (set.role + "_manifest.json"), manifest.dump(2) + "\n");
}

PromptSet ReadPromptSet(const std::filesystem::path& dir, const std::string& role) {
  const std::filesystem::path path = dir / (role + "_manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ReadTextFile(path));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, path.string() + ": " + e.what());
  }
  PromptSet set;
  set.role = manifest.value("role", role);
  for (const auto& e : manifest.at("prompts")) {
    set.prompts.push_back(ReadPromptFile(dir / e.at("file").get<std::string>()));
    set.labels.push_back(e.at("label"));
    set.plans.push_back(PlanFromJson(e.at("plan")));
    set.subset_seeds.push_back(e.at("subset_seed"));
    set.subsets.push_back(e.at("indices").get<std::vector<size_t>>());
  }
  return set;
}

double MeanUtility(const FrozenClassifier& model, const PromptSet& set,
                   const LabelMap& label_map, const Dataset& eval_set) {
  Require(set.size() > 0, ErrorCode::kInput, "empty prompt set");
  double sum = 0.0;
  for (const Prompt& p : set.prompts) sum += EvaluatePrompt(model, p, label_map, eval_set);
  return sum / static_cast<double>(set.size());
}

}  // namespace vpleak
