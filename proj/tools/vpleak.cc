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

// Command-line front end: one subcommand per pipeline stage.

#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vpleak/experiment.h"

namespace {

using vpleak::ExperimentConfig;
using vpleak::Report;

struct Flags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
};

int Run(const std::string& stage, const Flags& flags,
        const std::function<Report(const ExperimentConfig&)>& fn) {
  try {
    ExperimentConfig config = vpleak::RunStage("config", [&] {
      return vpleak::LoadConfig(flags.config);
    });
    if (flags.seed) config.seed = *flags.seed;
    if (flags.out) config.output_dir = *flags.out;
    if (flags.jobs) {
      if (*flags.jobs < 1) {
        std::cerr << "vpleak: " << stage << ": stage config: configuration error: --jobs must be at least 1\n";
        return 2;
      }
      config.jobs = *flags.jobs;
    }
    const Report report = fn(config);
    for (const auto& f : report.files) {
      std::cout << (config.OutputDir() / f).string() << "\n";
    }
    return 0;
  } catch (const vpleak::StageError& e) {
    std::cerr << "vpleak: " << stage << ": stage " << e.stage() << ": " << e.what() << "\n";
  } catch (const vpleak::Error& e) {
    std::cerr << "vpleak: " << stage << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "vpleak: " << stage << ": internal error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy auditing for visual prompts on frozen classifiers"};
  app.require_subcommand(1);
  Flags flags;
  const std::map<std::string, std::function<Report(const ExperimentConfig&)>> stages = {
      {"pretrain", vpleak::RunPretrain},       {"prompt-train", vpleak::RunPromptTrain},
      {"pia-gen", vpleak::RunPiaGen},          {"pia-attack", vpleak::RunPiaAttack},
      {"mia-attack", vpleak::RunMiaAttack},    {"defend", vpleak::RunDefend},
      {"report", vpleak::RunReport},
  };
  const std::map<std::string, std::string> help = {
      {"pretrain", "Train and register the frozen base classifiers"},
      {"prompt-train", "Train one visual prompt and report its utility"},
      {"pia-gen", "Generate shadow and target prompt sets for property inference"},
      {"pia-attack", "Train the property attack and fill the transfer matrix"},
      {"mia-attack", "Run membership inference over the epochs x size grid"},
      {"defend", "Sweep Gaussian prompt noise against naive and adaptive attackers"},
      {"report", "Combine stage summaries and render plots"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, fn] : stages) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", flags.config, "Experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Override the config seed");
    sub->add_option("--out", flags.out, "Override the output directory");
    sub->add_option("--jobs", flags.jobs, "Worker threads");
    subs[name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) return Run(name, flags, stages.at(name));
  }
  return 1;
}
