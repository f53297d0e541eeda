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

// Small shared fixtures for the unit tests.

#ifndef VPLEAK_TESTS_TEST_SUPPORT_H_
#define VPLEAK_TESTS_TEST_SUPPORT_H_

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "vpleak/data.h"
#include "vpleak/error.h"
#include "vpleak/model_zoo.h"
#include "vpleak/prompt.h"

namespace vpleak::testing {

inline DatasetDescriptor ToyBase() {
  DatasetDescriptor d;
  d.name = "toy-base";
  d.num_classes = 8;
  d.num_samples = 400;
  d.seed = 1;
  d.pattern_seed = 42;
  d.noise = 0.15;
  return d;
}

inline DatasetDescriptor ToyDownstream(int num_samples = 600) {
  DatasetDescriptor d = ToyBase();
  d.name = "toy-down";
  d.num_classes = 4;
  d.num_samples = num_samples;
  d.seed = 99;
  d.signal = 0.3;
  d.noise = 0.3;
  d.attributes = {{"male", 0.5, 0.3}, {"youth", 0.5, 0.3}};
  return d;
}

// Pretrained once per test binary.
inline const FrozenClassifier& ToyModel() {
  static const FrozenClassifier model = [] {
    ArchConfig arch;
    arch.epochs = 3;
    return PretrainBase(ToyBase(), arch, 7, "toy");
  }();
  return model;
}

inline const Dataset& ToyData() {
  static const Dataset data = GenerateDataset(ToyDownstream());
  return data;
}

inline PromptSpec ToySpec(int p = 4) {
  PromptSpec spec;
  spec.prompt_size = p;
  spec.dims = {3, 32, 32};
  return spec;
}

// Random values on the border, zero elsewhere.
inline Prompt RandomPrompt(const PromptSpec& spec, uint64_t seed, double scale = 0.5) {
  Prompt p = Prompt::Zero(spec);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (int i : BorderIndices(spec)) p.values[i] = static_cast<float>(n(rng));
  return p;
}

inline std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("vpleak_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace vpleak::testing

#define EXPECT_VPLEAK_ERROR(stmt, expected_code)                \
  do {                                                          \
    try {                                                       \
      stmt;                                                     \
      ADD_FAILURE() << "expected an error from " #stmt;         \
    } catch (const ::vpleak::Error& e) {                        \
      EXPECT_EQ(e.code(), expected_code) << e.what();           \
    }                                                           \
  } while (0)

#endif  // VPLEAK_TESTS_TEST_SUPPORT_H_
