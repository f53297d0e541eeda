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

// Config-driven experiment stages. Every stage reads an ExperimentConfig,
// persists its artifacts under the output directory and writes a CSV report
// plus a JSON summary. All numbers in reports use 4 decimal places and no
// report contains timestamps, so identical configs give identical bytes.

#ifndef VPLEAK_EXPERIMENT_H_
#define VPLEAK_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpleak/data.h"
#include "vpleak/error.h"

namespace vpleak {

// A registered model, pretrained on a named dataset.
struct ModelEntry {
  std::string model_id;
  std::string arch = "cnn-small";
  std::string dataset;
  int epochs = 8;
  double learning_rate = 2e-3;
  int batch_size = 32;
  uint64_t seed = 0;

  bool operator==(const ModelEntry&) const = default;
};

struct PromptSettings {
  int prompt_size = 8;
  int epochs = 50;
  double learning_rate = 10.0;
  std::string schedule = "cosine";
  int batch_size = 64;

  bool operator==(const PromptSettings&) const = default;
};

// A (model, dataset) pair.
struct Setting {
  std::string model;
  std::string dataset;

  bool operator==(const Setting&) const = default;
};

struct VplSection {
  Setting setting;
  int64_t train_size = 256;
  int64_t test_size = 256;

  bool operator==(const VplSection&) const = default;
};

struct PropertyEntry {
  std::string name;
  std::string kind = "binary-attribute-proportion";
  std::string attribute;
  std::vector<double> values;

  bool operator==(const PropertyEntry&) const = default;
};

struct PiaSection {
  // Shadow prompts come from settings[i], targets from settings[j]; the
  // diagonal is the matched configuration.
  std::vector<Setting> settings;
  std::vector<PropertyEntry> properties;
  std::string target_property;
  int64_t subset_size = 128;
  int shadow_runs = 50;
  int target_runs = 20;
  std::vector<double> split = {0.475, 0.475, 0.05};  // shadow, target, validation
  int shadow_epochs = 0;  // 0: use prompt.epochs
  int target_epochs = 0;
  int attack_epochs = 100;
  double attack_learning_rate = 1e-3;
  int attack_batch_size = 32;

  bool operator==(const PiaSection&) const = default;
};

struct MiaSection {
  std::vector<Setting> target_settings;
  std::vector<Setting> shadow_settings;  // empty: same as target_settings
  std::vector<int> epochs = {50, 100, 200, 400};
  std::vector<int64_t> train_sizes = {64, 128, 256, 512};
  int runs = 3;
  std::vector<std::string> attacks = {"nn",          "gradient",    "metric-corr",
                                      "metric-conf", "metric-ent", "metric-ment"};
  std::string threshold_mode = "class-wise";  // class-wise | overall
  std::vector<double> attack_learning_rates = {1e-2, 1e-3, 1e-4, 1e-5};
  int attack_epochs = 100;
  int attack_hidden = 32;
  int attack_batch_size = 32;
  bool save_features = true;

  bool operator==(const MiaSection&) const = default;
};

struct DefenseSection {
  std::string context = "mia";  // mia | pia
  std::vector<double> sigmas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<std::string> adversaries = {"naive", "adaptive"};
  // MIA context: the target configuration that gets defended.
  int epochs = 400;
  int64_t train_size = 128;
  int runs = 3;
  double utility_ratio = 0.8;
  double attack_ceiling = 0.55;

  bool operator==(const DefenseSection&) const = default;
};

struct ExperimentConfig {
  std::string experiment_id;
  uint64_t seed = 0;
  int jobs = 1;
  std::string output_dir = "out";
  std::string registry_dir = "registry";  // relative to output_dir
  std::vector<DatasetDescriptor> datasets;
  std::vector<ModelEntry> models;
  PromptSettings prompt;
  std::optional<VplSection> prompt_train;
  std::optional<PiaSection> pia;
  std::optional<MiaSection> mia;
  std::optional<DefenseSection> defense;

  bool operator==(const ExperimentConfig&) const = default;

  std::filesystem::path OutputDir() const { return output_dir; }
  std::filesystem::path RegistryDir() const;
};

// Unknown keys anywhere are kConfig errors naming the offending path.
ExperimentConfig ConfigFromJson(const nlohmann::json& j);
nlohmann::json ConfigToJson(const ExperimentConfig& config);
ExperimentConfig LoadConfig(const std::filesystem::path& path);

// An Error tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& message)
      : Error(code, message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Runs fn, re-tagging any Error it throws with `stage`.
template <typename Fn>
auto RunStage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.code(), e.message());
  }
}

struct MatrixSummary {
  double average_accuracy = 0.0;
  double average_drop = 0.0;  // mean over off-diagonal cells of diag[col] - cell
};

// Throws kInput on an empty or non-square matrix.
MatrixSummary SummarizeMatrix(const std::vector<std::vector<double>>& cells);

// Paths of the artifacts a stage writes, relative to the output directory.
struct Report {
  std::string experiment_id;
  std::string stage;
  nlohmann::json summary;
  std::vector<std::filesystem::path> files;
};

// Each stage validates the registry entries it needs before any training.
Report RunPretrain(const ExperimentConfig& config);
Report RunPromptTrain(const ExperimentConfig& config);
Report RunPiaGen(const ExperimentConfig& config);
Report RunPiaAttack(const ExperimentConfig& config);
Report RunMiaAttack(const ExperimentConfig& config);
Report RunDefend(const ExperimentConfig& config);
// Combines the stage summaries found in the output directory and renders
// the plots. Stages that have not run are skipped.
Report RunReport(const ExperimentConfig& config);

// Every stage the config has a section for, in pipeline order, then report.
std::vector<Report> RunExperiment(const ExperimentConfig& config);

}  // namespace vpleak

#endif  // VPLEAK_EXPERIMENT_H_
