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

#include "vpleak/experiment.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "vpleak/defense.h"
#include "vpleak/io.h"
#include "vpleak/mia.h"
#include "vpleak/model_zoo.h"
#include "vpleak/parallel.h"
#include "vpleak/pia.h"
#include "vpleak/plot.h"
#include "vpleak/sampler.h"
#include "vpleak/vpl.h"

namespace vpleak {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Strict config reading.

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    Require(j.is_object(), ErrorCode::kConfig, path_ + " must be an object");
  }

  template <typename T>
  T Get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return Convert<T>(j_.at(key), key);
  }

  template <typename T>
  T Need(const std::string& key) {
    seen_.insert(key);
    Require(j_.contains(key), ErrorCode::kConfig, "missing key " + Path(key));
    return Convert<T>(j_.at(key), key);
  }

  bool Has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& At(const std::string& key) const { return j_.at(key); }
  std::string Path(const std::string& key) const { return path_ + "." + key; }

  void Finish() const {
    for (const auto& item : j_.items()) {
      Require(seen_.contains(item.key()), ErrorCode::kConfig,
              "unknown key " + Path(item.key()));
    }
  }

 private:
  template <typename T>
  T Convert(const json& v, const std::string& key) const {
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      Fail(ErrorCode::kConfig, "wrong type for " + Path(key) + ": " + v.dump());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Dims DimsFromJson(const json& j, const std::string& path) {
  Require(j.is_array() && j.size() == 3, ErrorCode::kConfig,
          path + " must be [channels, height, width]");
  try {
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
  } catch (const json::exception&) {
    Fail(ErrorCode::kConfig, path + " must hold integers");
  }
}

json DimsToJson(const Dims& d) { return json::array({d.channels, d.height, d.width}); }

DatasetDescriptor DescriptorFromJson(const json& j, const std::string& path) {
  Reader r(j, path);
  DatasetDescriptor d;
  d.name = r.Need<std::string>("name");
  d.num_classes = r.Get("num_classes", d.num_classes);
  if (r.Has("dims")) d.dims = DimsFromJson(r.At("dims"), r.Path("dims"));
  d.num_samples = r.Get("num_samples", d.num_samples);
  d.seed = r.Get("seed", d.seed);
  d.pattern_seed = r.Get("pattern_seed", d.pattern_seed);
  d.signal = r.Get("signal", d.signal);
  d.noise = r.Get("noise", d.noise);
  d.label_noise = r.Get("label_noise", d.label_noise);
  d.class_offset = r.Get("class_offset", d.class_offset);
  d.shift = r.Get("shift", d.shift);
  d.shift_strength = r.Get("shift_strength", d.shift_strength);
  d.frame_width = r.Get("frame_width", d.frame_width);
  if (r.Has("attributes")) {
    const json& list = r.At("attributes");
    Require(list.is_array(), ErrorCode::kConfig, r.Path("attributes") + " must be a list");
    for (size_t i = 0; i < list.size(); ++i) {
      Reader a(list[i], r.Path("attributes") + "[" + std::to_string(i) + "]");
      AttributeSpec spec;
      spec.name = a.Need<std::string>("name");
      spec.prevalence = a.Get("prevalence", spec.prevalence);
      spec.amplitude = a.Get("amplitude", spec.amplitude);
      a.Finish();
      d.attributes.push_back(spec);
    }
  }
  r.Finish();
  return d;
}

json DescriptorToJson(const DatasetDescriptor& d) {
  json attrs = json::array();
  for (const AttributeSpec& a : d.attributes) {
    attrs.push_back({{"name", a.name}, {"prevalence", a.prevalence}, {"amplitude", a.amplitude}});
  }
  return {{"name", d.name},
          {"num_classes", d.num_classes},
          {"dims", DimsToJson(d.dims)},
          {"num_samples", d.num_samples},
          {"seed", d.seed},
          {"pattern_seed", d.pattern_seed},
          {"signal", d.signal},
          {"noise", d.noise},
          {"label_noise", d.label_noise},
          {"class_offset", d.class_offset},
          {"shift", d.shift},
          {"shift_strength", d.shift_strength},
          {"frame_width", d.frame_width},
          {"attributes", attrs}};
}

Setting SettingFromJson(const json& j, const std::string& path) {
  Reader r(j, path);
  Setting s{r.Need<std::string>("model"), r.Need<std::string>("dataset")};
  r.Finish();
  return s;
}

json SettingToJson(const Setting& s) { return {{"model", s.model}, {"dataset", s.dataset}}; }

std::vector<Setting> SettingsFromJson(Reader& r, const std::string& key) {
  std::vector<Setting> out;
  if (!r.Has(key)) return out;
  const json& list = r.At(key);
  Require(list.is_array(), ErrorCode::kConfig, r.Path(key) + " must be a list");
  for (size_t i = 0; i < list.size(); ++i) {
    out.push_back(SettingFromJson(list[i], r.Path(key) + "[" + std::to_string(i) + "]"));
  }
  return out;
}

json SettingsToJson(const std::vector<Setting>& settings) {
  json out = json::array();
  for (const Setting& s : settings) out.push_back(SettingToJson(s));
  return out;
}

// ---------------------------------------------------------------------------
// Shared stage plumbing.

double Round4(double v) {
  const double r = std::round(v * 1e4) / 1e4;
  return r == 0.0 ? 0.0 : r;  // no negative zero
}

double Mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

std::string SettingName(const Setting& s) { return s.model + "@" + s.dataset; }

class Context {
 public:
  explicit Context(const ExperimentConfig& config)
      : config_(config), registry_(config.RegistryDir()) {}

  const ExperimentConfig& config() const { return config_; }
  const ModelRegistry& registry() const { return registry_; }
  std::filesystem::path Out(const std::string& relative) const {
    return config_.OutputDir() / relative;
  }

  const DatasetDescriptor& Descriptor(const std::string& name) const {
    for (const DatasetDescriptor& d : config_.datasets) {
      if (d.name == name) return d;
    }
    Fail(ErrorCode::kConfig, "dataset '" + name + "' is not declared in the config");
  }

  const Dataset& Data(const std::string& name) {
    auto it = datasets_.find(name);
    if (it == datasets_.end()) it = datasets_.emplace(name, GenerateDataset(Descriptor(name))).first;
    return it->second;
  }

  // Fail-fast: every model must be registered before any training starts.
  void RequireModels(const std::vector<Setting>& settings) const {
    for (const Setting& s : settings) {
      Require(registry_.Contains(s.model), ErrorCode::kRegistry,
              "model '" + s.model + "' is not registered in " + registry_.dir().string() +
                  " (run pretrain first)");
      Descriptor(s.dataset);
    }
  }

  const FrozenClassifier& Model(const std::string& id) {
    auto it = models_.find(id);
    if (it == models_.end()) it = models_.emplace(id, registry_.Get(id)).first;
    return it->second;
  }

  PromptSpec Spec(const FrozenClassifier& model) const {
    PromptSpec spec;
    spec.prompt_size = config_.prompt.prompt_size;
    spec.dims = model.input_dims();
    return spec;
  }

  PromptHyper Hyper(int epochs, uint64_t seed) const {
    PromptHyper h;
    h.epochs = epochs > 0 ? epochs : config_.prompt.epochs;
    h.learning_rate = config_.prompt.learning_rate;
    h.schedule = config_.prompt.schedule;
    h.batch_size = config_.prompt.batch_size;
    h.seed = seed;
    return h;
  }

 private:
  const ExperimentConfig& config_;
  ModelRegistry registry_;
  std::map<std::string, Dataset> datasets_;
  std::map<std::string, FrozenClassifier> models_;
};

Report Finish(const Context& ctx, const std::string& stage, const std::string& csv,
              json summary) {
  const std::string stem = [&] {
    std::string s = stage;
    std::replace(s.begin(), s.end(), '-', '_');
    return s;
  }();
  Report report;
  report.experiment_id = ctx.config().experiment_id;
  report.stage = stage;
  summary["experiment_id"] = ctx.config().experiment_id;
  summary["stage"] = stage;
  report.summary = summary;
  WriteTextFile(ctx.Out(stem + "_report.csv"), csv);
  WriteTextFile(ctx.Out(stem + "_summary.json"), summary.dump(2) + "\n");
  report.files = {stem + "_report.csv", stem + "_summary.json"};
  return report;
}

double DigestCheck(const FrozenClassifier& model, const std::string& before) {
  Require(model.RecomputeDigest() == before, ErrorCode::kTraining,
          "model '" + model.model_id() + "' parameters changed during prompt training");
  return 1.0;
}

// ---------------------------------------------------------------------------
// PIA helpers.

PiaTask MakeTask(const PiaSection& pia) {
  PiaTask task;
  task.subset_size = pia.subset_size;
  int target = -1;
  for (size_t i = 0; i < pia.properties.size(); ++i) {
    const PropertyEntry& p = pia.properties[i];
    task.properties.push_back({p.name, ParsePropertyKind(p.kind), p.attribute});
    task.values.push_back(p.values);
    if (p.name == pia.target_property) target = static_cast<int>(i);
  }
  Require(target >= 0, ErrorCode::kConfig,
          "pia.target_property '" + pia.target_property + "' is not a listed property");
  task.target_property = target;
  task.Validate();
  return task;
}

std::vector<std::vector<size_t>> PiaPools(const PiaSection& pia, size_t n, uint64_t seed) {
  Require(pia.split.size() == 3, ErrorCode::kConfig,
          "pia.split needs shadow, target and validation fractions");
  std::vector<size_t> sizes;
  for (double f : pia.split) {
    Require(f > 0.0 && f <= 1.0, ErrorCode::kConfig, "pia.split fractions must lie in (0, 1]");
    sizes.push_back(static_cast<size_t>(std::floor(f * static_cast<double>(n))));
  }
  return DisjointPools(n, sizes, seed);
}

std::filesystem::path PiaDir(const Context& ctx, size_t setting) {
  return ctx.Out("pia/setting_" + std::to_string(setting));
}

struct PiaSets {
  PromptSet shadow;
  PromptSet target;
  std::vector<size_t> validation;
};

PiaSets GenerateOrLoadPia(Context& ctx, size_t i, bool force_generate) {
  const ExperimentConfig& cfg = ctx.config();
  const PiaSection& pia = *cfg.pia;
  const Setting& s = pia.settings[i];
  const Dataset& data = ctx.Data(s.dataset);
  const uint64_t setting_seed = DeriveSeed(cfg.seed, 0x50494100 + i);
  auto pools = RunStage("sampling", [&] { return PiaPools(pia, data.size(), setting_seed); });
  PiaSets sets;
  sets.validation = pools[2];
  const std::filesystem::path dir = PiaDir(ctx, i);
  if (!force_generate && std::filesystem::exists(dir / "shadow_manifest.json") &&
      std::filesystem::exists(dir / "target_manifest.json")) {
    sets.shadow = ReadPromptSet(dir, "shadow");
    sets.target = ReadPromptSet(dir, "target");
    return sets;
  }
  const PiaTask task = MakeTask(pia);
  const auto functions = EnumerateSamplingFunctions(task);
  const FrozenClassifier& model = ctx.Model(s.model);
  const std::string digest = model.param_digest();
  PromptJobConfig job;
  job.spec = ctx.Spec(model);
  job.label_map = {data.num_classes};
  job.jobs = cfg.jobs;
  RunStage("prompt-train", [&] {
    job.hyper = ctx.Hyper(pia.shadow_epochs, 0);
    sets.shadow = GeneratePromptSet(model, data, pools[0], task, functions, pia.shadow_runs,
                                    job, "shadow", DeriveSeed(setting_seed, 1));
    job.hyper = ctx.Hyper(pia.target_epochs, 0);
    sets.target = GeneratePromptSet(model, data, pools[1], task, functions, pia.target_runs,
                                    job, "target", DeriveSeed(setting_seed, 2));
    DigestCheck(model, digest);
  });
  WritePromptSet(dir, sets.shadow);
  WritePromptSet(dir, sets.target);
  return sets;
}

PiaHyper MakePiaHyper(const PiaSection& pia, const PromptSet& shadow, uint64_t seed) {
  PiaHyper h;
  Require(shadow.size() > 0, ErrorCode::kTraining, "shadow prompt set is empty");
  h.canvas_dims = shadow.prompts.front().spec.dims;
  h.epochs = pia.attack_epochs;
  h.learning_rate = pia.attack_learning_rate;
  h.batch_size = pia.attack_batch_size;
  h.seed = seed;
  return h;
}

std::string JoinValues(const std::vector<double>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ";";
    out += FormatDecimal(values[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// MIA helpers.

MiaRunConfig MakeMiaRunConfig(const MiaSection& mia, const PromptSpec& spec, int classes,
                              uint64_t seed) {
  MiaRunConfig rc;
  rc.spec = spec;
  rc.label_map = {classes};
  rc.run_nn = false;
  rc.run_gradient = false;
  rc.metrics.clear();
  for (const std::string& a : mia.attacks) {
    if (a == "nn") {
      rc.run_nn = true;
    } else if (a == "gradient") {
      rc.run_gradient = true;
    } else if (a.starts_with("metric-")) {
      rc.metrics.push_back(ParseMetric(a.substr(7)));
    } else {
      Fail(ErrorCode::kConfig, "unknown attack '" + a + "'");
    }
  }
  Require(mia.threshold_mode == "class-wise" || mia.threshold_mode == "overall",
          ErrorCode::kConfig, "mia.threshold_mode must be class-wise or overall");
  rc.threshold_mode =
      mia.threshold_mode == "overall" ? ThresholdMode::kOverall : ThresholdMode::kClassWise;
  rc.attack_hyper.learning_rates = mia.attack_learning_rates;
  rc.attack_hyper.epochs = mia.attack_epochs;
  rc.attack_hyper.hidden = mia.attack_hidden;
  rc.attack_hyper.batch_size = mia.attack_batch_size;
  rc.attack_hyper.seed = seed;
  return rc;
}

std::vector<Setting> ShadowSettings(const MiaSection& mia) {
  return mia.shadow_settings.empty() ? mia.target_settings : mia.shadow_settings;
}

uint64_t SplitSeed(uint64_t seed, int64_t train_size, int run) {
  return DeriveSeed(DeriveSeed(seed, 0x4d494100 + static_cast<uint64_t>(train_size)),
                    static_cast<uint64_t>(run));
}

// Target parts from the target dataset, shadow parts from the shadow dataset,
// both cut from one seeded permutation so a shared dataset stays disjoint.
MiaData MiaSplitData(const Dataset& target, const Dataset& shadow, int64_t n, uint64_t seed) {
  const size_t size = static_cast<size_t>(n);
  const size_t pool_size = std::min(target.size(), shadow.size());
  std::vector<size_t> pool(pool_size);
  std::iota(pool.begin(), pool.end(), 0);
  const MiaSplits splits = MakeSplits(pool, {size, size, size, size}, seed);
  return MaterializeSplits(target, shadow, splits);
}

std::string MiaCsvHeader() {
  return "shadow_setting,target_setting,epochs,train_size,run,seed,utility,overfit_gap,family,"
         "accuracy\n";
}

}  // namespace

std::filesystem::path ExperimentConfig::RegistryDir() const {
  const std::filesystem::path r(registry_dir);
  return r.is_absolute() ? r : (OutputDir() / r).lexically_normal();
}

ExperimentConfig ConfigFromJson(const json& j) {
  Reader r(j, "config");
  ExperimentConfig c;
  c.experiment_id = r.Need<std::string>("experiment_id");
  c.seed = r.Get("seed", c.seed);
  c.jobs = r.Get("jobs", c.jobs);
  c.output_dir = r.Get("output_dir", c.output_dir);
  c.registry_dir = r.Get("registry_dir", c.registry_dir);
  if (r.Has("datasets")) {
    const json& list = r.At("datasets");
    Require(list.is_array(), ErrorCode::kConfig, "config.datasets must be a list");
    for (size_t i = 0; i < list.size(); ++i) {
      c.datasets.push_back(DescriptorFromJson(list[i], "config.datasets[" + std::to_string(i) + "]"));
    }
  }
  if (r.Has("models")) {
    const json& list = r.At("models");
    Require(list.is_array(), ErrorCode::kConfig, "config.models must be a list");
    for (size_t i = 0; i < list.size(); ++i) {
      Reader m(list[i], "config.models[" + std::to_string(i) + "]");
      ModelEntry e;
      e.model_id = m.Need<std::string>("model_id");
      e.arch = m.Get("arch", e.arch);
      e.dataset = m.Need<std::string>("dataset");
      e.epochs = m.Get("epochs", e.epochs);
      e.learning_rate = m.Get("learning_rate", e.learning_rate);
      e.batch_size = m.Get("batch_size", e.batch_size);
      e.seed = m.Get("seed", e.seed);
      m.Finish();
      c.models.push_back(e);
    }
  }
  if (r.Has("prompt")) {
    Reader p(r.At("prompt"), "config.prompt");
    c.prompt.prompt_size = p.Get("prompt_size", c.prompt.prompt_size);
    c.prompt.epochs = p.Get("epochs", c.prompt.epochs);
    c.prompt.learning_rate = p.Get("learning_rate", c.prompt.learning_rate);
    c.prompt.schedule = p.Get("schedule", c.prompt.schedule);
    c.prompt.batch_size = p.Get("batch_size", c.prompt.batch_size);
    p.Finish();
  }
  if (r.Has("prompt_train")) {
    Reader p(r.At("prompt_train"), "config.prompt_train");
    VplSection v;
    v.setting = SettingFromJson(p.Need<json>("setting"), "config.prompt_train.setting");
    v.train_size = p.Get("train_size", v.train_size);
    v.test_size = p.Get("test_size", v.test_size);
    p.Finish();
    c.prompt_train = v;
  }
  if (r.Has("pia")) {
    Reader p(r.At("pia"), "config.pia");
    PiaSection s;
    s.settings = SettingsFromJson(p, "settings");
    if (p.Has("properties")) {
      const json& list = p.At("properties");
      Require(list.is_array(), ErrorCode::kConfig, "config.pia.properties must be a list");
      for (size_t i = 0; i < list.size(); ++i) {
        Reader q(list[i], "config.pia.properties[" + std::to_string(i) + "]");
        PropertyEntry e;
        e.name = q.Need<std::string>("name");
        e.kind = q.Get("kind", e.kind);
        e.attribute = q.Get("attribute", e.attribute);
        e.values = q.Need<std::vector<double>>("values");
        q.Finish();
        s.properties.push_back(e);
      }
    }
    s.target_property = p.Need<std::string>("target_property");
    s.subset_size = p.Get("subset_size", s.subset_size);
    s.shadow_runs = p.Get("shadow_runs", s.shadow_runs);
    s.target_runs = p.Get("target_runs", s.target_runs);
    s.split = p.Get("split", s.split);
    s.shadow_epochs = p.Get("shadow_epochs", s.shadow_epochs);
    s.target_epochs = p.Get("target_epochs", s.target_epochs);
    s.attack_epochs = p.Get("attack_epochs", s.attack_epochs);
    s.attack_learning_rate = p.Get("attack_learning_rate", s.attack_learning_rate);
    s.attack_batch_size = p.Get("attack_batch_size", s.attack_batch_size);
    p.Finish();
    Require(!s.settings.empty(), ErrorCode::kConfig, "config.pia.settings is empty");
    c.pia = s;
  }
  if (r.Has("mia")) {
    Reader p(r.At("mia"), "config.mia");
    MiaSection s;
    s.target_settings = SettingsFromJson(p, "target_settings");
    s.shadow_settings = SettingsFromJson(p, "shadow_settings");
    s.epochs = p.Get("epochs", s.epochs);
    s.train_sizes = p.Get("train_sizes", s.train_sizes);
    s.runs = p.Get("runs", s.runs);
    s.attacks = p.Get("attacks", s.attacks);
    s.threshold_mode = p.Get("threshold_mode", s.threshold_mode);
    s.attack_learning_rates = p.Get("attack_learning_rates", s.attack_learning_rates);
    s.attack_epochs = p.Get("attack_epochs", s.attack_epochs);
    s.attack_hidden = p.Get("attack_hidden", s.attack_hidden);
    s.attack_batch_size = p.Get("attack_batch_size", s.attack_batch_size);
    s.save_features = p.Get("save_features", s.save_features);
    p.Finish();
    Require(!s.target_settings.empty(), ErrorCode::kConfig, "config.mia.target_settings is empty");
    c.mia = s;
  }
  if (r.Has("defense")) {
    Reader p(r.At("defense"), "config.defense");
    DefenseSection s;
    s.context = p.Get("context", s.context);
    s.sigmas = p.Get("sigmas", s.sigmas);
    s.adversaries = p.Get("adversaries", s.adversaries);
    s.epochs = p.Get("epochs", s.epochs);
    s.train_size = p.Get("train_size", s.train_size);
    s.runs = p.Get("runs", s.runs);
    s.utility_ratio = p.Get("utility_ratio", s.utility_ratio);
    s.attack_ceiling = p.Get("attack_ceiling", s.attack_ceiling);
    p.Finish();
    Require(s.context == "mia" || s.context == "pia", ErrorCode::kConfig,
            "config.defense.context must be mia or pia");
    for (const std::string& a : s.adversaries) {
      Require(a == "naive" || a == "adaptive", ErrorCode::kConfig,
              "unknown adversary '" + a + "'");
    }
    c.defense = s;
  }
  r.Finish();
  Require(c.jobs >= 1, ErrorCode::kConfig, "config.jobs must be at least 1");
  return c;
}

json ConfigToJson(const ExperimentConfig& c) {
  json j = {{"experiment_id", c.experiment_id},
            {"seed", c.seed},
            {"jobs", c.jobs},
            {"output_dir", c.output_dir},
            {"registry_dir", c.registry_dir}};
  j["datasets"] = json::array();
  for (const DatasetDescriptor& d : c.datasets) j["datasets"].push_back(DescriptorToJson(d));
  j["models"] = json::array();
  for (const ModelEntry& m : c.models) {
    j["models"].push_back({{"model_id", m.model_id},
                           {"arch", m.arch},
                           {"dataset", m.dataset},
                           {"epochs", m.epochs},
                           {"learning_rate", m.learning_rate},
                           {"batch_size", m.batch_size},
                           {"seed", m.seed}});
  }
  j["prompt"] = {{"prompt_size", c.prompt.prompt_size},
                 {"epochs", c.prompt.epochs},
                 {"learning_rate", c.prompt.learning_rate},
                 {"schedule", c.prompt.schedule},
                 {"batch_size", c.prompt.batch_size}};
  if (c.prompt_train) {
    j["prompt_train"] = {{"setting", SettingToJson(c.prompt_train->setting)},
                         {"train_size", c.prompt_train->train_size},
                         {"test_size", c.prompt_train->test_size}};
  }
  if (c.pia) {
    const PiaSection& s = *c.pia;
    json props = json::array();
    for (const PropertyEntry& p : s.properties) {
      props.push_back(
          {{"name", p.name}, {"kind", p.kind}, {"attribute", p.attribute}, {"values", p.values}});
    }
    j["pia"] = {{"settings", SettingsToJson(s.settings)},
                {"properties", props},
                {"target_property", s.target_property},
                {"subset_size", s.subset_size},
                {"shadow_runs", s.shadow_runs},
                {"target_runs", s.target_runs},
                {"split", s.split},
                {"shadow_epochs", s.shadow_epochs},
                {"target_epochs", s.target_epochs},
                {"attack_epochs", s.attack_epochs},
                {"attack_learning_rate", s.attack_learning_rate},
                {"attack_batch_size", s.attack_batch_size}};
  }
  if (c.mia) {
    const MiaSection& s = *c.mia;
    j["mia"] = {{"target_settings", SettingsToJson(s.target_settings)},
                {"shadow_settings", SettingsToJson(s.shadow_settings)},
                {"epochs", s.epochs},
                {"train_sizes", s.train_sizes},
                {"runs", s.runs},
                {"attacks", s.attacks},
                {"threshold_mode", s.threshold_mode},
                {"attack_learning_rates", s.attack_learning_rates},
                {"attack_epochs", s.attack_epochs},
                {"attack_hidden", s.attack_hidden},
                {"attack_batch_size", s.attack_batch_size},
                {"save_features", s.save_features}};
  }
  if (c.defense) {
    const DefenseSection& s = *c.defense;
    j["defense"] = {{"context", s.context},
                    {"sigmas", s.sigmas},
                    {"adversaries", s.adversaries},
                    {"epochs", s.epochs},
                    {"train_size", s.train_size},
                    {"runs", s.runs},
                    {"utility_ratio", s.utility_ratio},
                    {"attack_ceiling", s.attack_ceiling}};
  }
  return j;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(ReadTextFile(path));
  } catch (const json::exception& e) {
    Fail(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return ConfigFromJson(j);
}

MatrixSummary SummarizeMatrix(const std::vector<std::vector<double>>& cells) {
  Require(!cells.empty(), ErrorCode::kInput, "cannot summarize an empty matrix");
  const size_t n = cells.size();
  for (const auto& row : cells) {
    Require(row.size() == n, ErrorCode::kInput,
            "accuracy matrix must be square (" + std::to_string(n) + " rows, a row has " +
                std::to_string(row.size()) + " cells)");
  }
  MatrixSummary s;
  double total = 0.0;
  double drop = 0.0;
  for (size_t r = 0; r < n; ++r) {
    for (size_t c = 0; c < n; ++c) {
      total += cells[r][c];
      if (r != c) drop += cells[c][c] - cells[r][c];
    }
  }
  s.average_accuracy = total / static_cast<double>(n * n);
  s.average_drop = n > 1 ? drop / static_cast<double>(n * (n - 1)) : 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Stages.

Report RunPretrain(const ExperimentConfig& config) {
  return RunStage("pretrain", [&] {
    Context ctx(config);
    Require(!config.models.empty(), ErrorCode::kConfig, "config.models is empty");
    for (const ModelEntry& m : config.models) ctx.Descriptor(m.dataset);
    std::vector<std::optional<FrozenClassifier>> trained(config.models.size());
    std::vector<double> accuracy(config.models.size());
    ParallelFor(config.models.size(), config.jobs, [&](size_t i) {
      const ModelEntry& m = config.models[i];
      const DatasetDescriptor& d = ctx.Descriptor(m.dataset);
      ArchConfig arch;
      arch.arch_name = m.arch;
      arch.input_dims = d.dims;
      arch.num_classes = d.num_classes;
      arch.epochs = m.epochs;
      arch.learning_rate = m.learning_rate;
      arch.batch_size = m.batch_size;
      trained[i] = PretrainBase(d, arch, m.seed, m.model_id);
      const Dataset data = GenerateDataset(d);
      size_t correct = 0;
      for (size_t k = 0; k < data.size(); ++k) {
        correct += nn::Argmax(trained[i]->Forward(data.images[k])) == data.labels[k];
      }
      accuracy[i] = data.size() ? static_cast<double>(correct) / data.size() : 0.0;
    });
    std::ostringstream csv;
    csv << "model_id,arch,dataset,param_count,train_accuracy,param_digest\n";
    json models = json::array();
    for (size_t i = 0; i < config.models.size(); ++i) {
      const FrozenClassifier& model = *trained[i];
      ctx.registry().Put(model);
      const ModelEntry& m = config.models[i];
      csv << m.model_id << "," << m.arch << "," << m.dataset << ","
          << model.network().ParamCount() << "," << FormatDecimal(accuracy[i]) << ","
          << model.param_digest() << "\n";
      models.push_back({{"model_id", m.model_id},
                        {"arch", m.arch},
                        {"dataset", m.dataset},
                        {"param_count", model.network().ParamCount()},
                        {"train_accuracy", Round4(accuracy[i])},
                        {"param_digest", model.param_digest()}});
    }
    return Finish(ctx, "pretrain", csv.str(), {{"models", models}});
  });
}

Report RunPromptTrain(const ExperimentConfig& config) {
  return RunStage("prompt-train", [&] {
    Require(config.prompt_train.has_value(), ErrorCode::kConfig,
            "config has no prompt_train section");
    Context ctx(config);
    const VplSection& v = *config.prompt_train;
    ctx.RequireModels({v.setting});
    const FrozenClassifier& model = ctx.Model(v.setting.model);
    const Dataset& data = ctx.Data(v.setting.dataset);
    const size_t n_train = static_cast<size_t>(v.train_size);
    const size_t n_test = static_cast<size_t>(v.test_size);
    Require(n_train + n_test <= data.size() && n_train > 0 && n_test > 0, ErrorCode::kConfig,
            "prompt_train sizes do not fit dataset '" + data.name + "'");
    std::vector<size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(DeriveSeed(config.seed, 0x565000));
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<size_t> train_idx(order.begin(), order.begin() + n_train);
    const std::vector<size_t> test_idx(order.begin() + n_train, order.begin() + n_train + n_test);
    const Dataset train = Subset(data, train_idx);
    const Dataset test = Subset(data, test_idx);
    const PromptSpec spec = ctx.Spec(model);
    const LabelMap map{data.num_classes};
    const std::string digest = model.param_digest();
    const Prompt prompt =
        TrainPrompt(model, train, spec, map, ctx.Hyper(0, DeriveSeed(config.seed, 0x565001)));
    DigestCheck(model, digest);
    WritePromptFile(ctx.Out("prompt_train/prompt.vppr"), prompt);
    const double zero = EvaluatePrompt(model, Prompt::Zero(spec), map, test);
    const double train_acc = EvaluatePrompt(model, prompt, map, train);
    const double test_acc = EvaluatePrompt(model, prompt, map, test);
    std::ostringstream csv;
    csv << "model,dataset,prompt_size,param_count,epochs,train_size,zero_prompt_accuracy,"
           "train_accuracy,test_accuracy\n";
    csv << model.model_id() << "," << data.name << "," << spec.prompt_size << ","
        << ParamCount(spec) << "," << prompt.provenance.epochs << "," << n_train << ","
        << FormatDecimal(zero) << "," << FormatDecimal(train_acc) << ","
        << FormatDecimal(test_acc) << "\n";
    json summary = {{"model", model.model_id()},
                    {"dataset", data.name},
                    {"prompt_size", spec.prompt_size},
                    {"param_count", ParamCount(spec)},
                    {"zero_prompt_accuracy", Round4(zero)},
                    {"train_accuracy", Round4(train_acc)},
                    {"test_accuracy", Round4(test_acc)},
                    {"model_digest_unchanged", true},
                    {"prompt_file", "prompt_train/prompt.vppr"}};
    return Finish(ctx, "prompt-train", csv.str(), summary);
  });
}

Report RunPiaGen(const ExperimentConfig& config) {
  return RunStage("pia-gen", [&] {
    Require(config.pia.has_value(), ErrorCode::kConfig, "config has no pia section");
    Context ctx(config);
    const PiaSection& pia = *config.pia;
    ctx.RequireModels(pia.settings);
    MakeTask(pia);
    std::ostringstream csv;
    csv << "setting,role,prompts,label,count,mean_utility\n";
    json settings = json::array();
    for (size_t i = 0; i < pia.settings.size(); ++i) {
      const PiaSets sets = GenerateOrLoadPia(ctx, i, /*force_generate=*/true);
      const Setting& s = pia.settings[i];
      const Dataset& data = ctx.Data(s.dataset);
      const FrozenClassifier& model = ctx.Model(s.model);
      const Dataset validation = Subset(data, sets.validation);
      const LabelMap map{data.num_classes};
      json entry = {{"setting", SettingName(s)}};
      for (const PromptSet* set : {&sets.shadow, &sets.target}) {
        std::map<int, int> counts;
        for (int l : set->labels) ++counts[l];
        const double utility =
            set->size() ? MeanUtility(model, *set, map, validation) : 0.0;
        for (const auto& [label, count] : counts) {
          csv << SettingName(s) << "," << set->role << "," << set->size() << "," << label << ","
              << count << "," << FormatDecimal(utility) << "\n";
        }
        entry[set->role] = {{"prompts", set->size()}, {"mean_utility", Round4(utility)}};
      }
      settings.push_back(entry);
    }
    return Finish(ctx, "pia-gen", csv.str(), {{"settings", settings}});
  });
}

Report RunPiaAttack(const ExperimentConfig& config) {
  return RunStage("pia-attack", [&] {
    Require(config.pia.has_value(), ErrorCode::kConfig, "config has no pia section");
    Context ctx(config);
    const PiaSection& pia = *config.pia;
    ctx.RequireModels(pia.settings);
    const PiaTask task = MakeTask(pia);
    const size_t n = pia.settings.size();
    std::vector<PiaSets> sets;
    for (size_t i = 0; i < n; ++i) sets.push_back(GenerateOrLoadPia(ctx, i, false));
    std::vector<std::vector<double>> matrix(n, std::vector<double>(n));
    std::ostringstream csv;
    csv << "task,property,condition_values,shadow_setting,target_setting,num_shadow,num_target,"
           "accuracy,seed\n";
    json digests = json::array();
    for (size_t i = 0; i < n; ++i) {
      const uint64_t seed = DeriveSeed(config.seed, 0x41540000 + i);
      const PiaAttackModel attack = RunStage("attack", [&] {
        return TrainPiaModel(sets[i].shadow, task.num_labels(),
                             MakePiaHyper(pia, sets[i].shadow, seed));
      });
      digests.push_back(attack.digest());
      for (size_t j = 0; j < n; ++j) {
        matrix[i][j] = EvaluatePia(attack, sets[j].target);
        csv << config.experiment_id << "," << pia.target_property << ","
            << JoinValues(task.values[task.target_property]) << ","
            << SettingName(pia.settings[i]) << "," << SettingName(pia.settings[j]) << ","
            << sets[i].shadow.size() << "," << sets[j].target.size() << ","
            << FormatDecimal(matrix[i][j]) << "," << seed << "\n";
      }
    }
    const MatrixSummary ms = SummarizeMatrix(matrix);
    json rows = json::array();
    for (const auto& row : matrix) {
      json r = json::array();
      for (double v : row) r.push_back(Round4(v));
      rows.push_back(r);
    }
    json names = json::array();
    for (const Setting& s : pia.settings) names.push_back(SettingName(s));
    json summary = {{"property", pia.target_property},
                    {"condition_values", task.values[task.target_property]},
                    {"settings", names},
                    {"matrix", rows},
                    {"average_accuracy", Round4(ms.average_accuracy)},
                    {"average_drop", Round4(ms.average_drop)},
                    {"attack_digests", digests}};
    return Finish(ctx, "pia-attack", csv.str(), summary);
  });
}

Report RunMiaAttack(const ExperimentConfig& config) {
  return RunStage("mia-attack", [&] {
    Require(config.mia.has_value(), ErrorCode::kConfig, "config has no mia section");
    Context ctx(config);
    const MiaSection& mia = *config.mia;
    const std::vector<Setting> targets = mia.target_settings;
    const std::vector<Setting> shadows = ShadowSettings(mia);
    ctx.RequireModels(targets);
    ctx.RequireModels(shadows);
    Require(mia.runs >= 1 && !mia.epochs.empty() && !mia.train_sizes.empty(), ErrorCode::kConfig,
            "mia grid needs epochs, train_sizes and runs >= 1");
    // Validates the attack list before any training.
    MakeMiaRunConfig(mia, {}, 1, 0);
    for (const Setting& s : targets) ctx.Data(s.dataset), ctx.Model(s.model);
    for (const Setting& s : shadows) ctx.Data(s.dataset), ctx.Model(s.model);

    struct Cell {
      size_t e, s;
      int run;
    };
    std::vector<Cell> cells;
    for (size_t e = 0; e < mia.epochs.size(); ++e) {
      for (size_t s = 0; s < mia.train_sizes.size(); ++s) {
        for (int r = 0; r < mia.runs; ++r) cells.push_back({e, s, r});
      }
    }
    // Prompts: one per (setting, cell); targets first, then shadows.
    const size_t nt = targets.size(), ns = shadows.size(), nc = cells.size();
    std::vector<Prompt> target_prompts(nt * nc), shadow_prompts(ns * nc);
    std::map<std::string, std::string> digests;
    for (const Setting& s : targets) digests[s.model] = ctx.Model(s.model).param_digest();
    for (const Setting& s : shadows) digests[s.model] = ctx.Model(s.model).param_digest();
    auto data_for = [&](const Setting& t, const Setting& sh, const Cell& c) {
      const int64_t n = mia.train_sizes[c.s];
      return MiaSplitData(ctx.Data(t.dataset), ctx.Data(sh.dataset), n,
                          SplitSeed(config.seed, n, c.run));
    };
    RunStage("prompt-train", [&] {
      ParallelFor(nt * nc + ns * nc, config.jobs, [&](size_t k) {
        const bool is_target = k < nt * nc;
        const size_t idx = is_target ? k : k - nt * nc;
        const Setting& setting = is_target ? targets[idx / nc] : shadows[idx / nc];
        const Cell& c = cells[idx % nc];
        const MiaData d = data_for(setting, setting, c);
        const FrozenClassifier& model = ctx.Model(setting.model);
        const uint64_t seed = DeriveSeed(SplitSeed(config.seed, mia.train_sizes[c.s], c.run),
                                         (is_target ? 0x100 : 0x200) + 16 * (idx / nc) + c.e);
        const PromptHyper h = ctx.Hyper(mia.epochs[c.e], seed);
        const LabelMap map{d.target_train.num_classes};
        Prompt p = is_target ? TrainPrompt(model, d.target_train, ctx.Spec(model), map, h)
                             : TrainPrompt(model, d.shadow_train, ctx.Spec(model), map, h);
        (is_target ? target_prompts : shadow_prompts)[idx] = std::move(p);
      });
      for (const auto& [id, digest] : digests) DigestCheck(ctx.Model(id), digest);
    });

    struct Result {
      double utility = 0.0, gap = 0.0;
      std::map<std::string, double> accuracy;
      uint64_t seed = 0;
    };
    std::vector<Result> results(ns * nt * nc);
    RunStage("attack", [&] {
      ParallelFor(results.size(), config.jobs, [&](size_t k) {
        const size_t i = k / (nt * nc), j = (k / nc) % nt, ci = k % nc;
        const Cell& c = cells[ci];
        const MiaData d = data_for(targets[j], shadows[i], c);
        const FrozenClassifier& tm = ctx.Model(targets[j].model);
        const FrozenClassifier& sm = ctx.Model(shadows[i].model);
        const Prompt& tp = target_prompts[j * nc + ci];
        const Prompt& sp = shadow_prompts[i * nc + ci];
        Result& res = results[k];
        res.seed = SplitSeed(config.seed, mia.train_sizes[c.s], c.run);
        MiaRunConfig rc = MakeMiaRunConfig(mia, ctx.Spec(tm), d.target_train.num_classes,
                                           DeriveSeed(res.seed, 0x300 + c.e));
        res.utility = EvaluatePrompt(tm, tp, rc.label_map, d.target_test);
        res.gap = EvaluatePrompt(tm, tp, rc.label_map, d.target_train) - res.utility;
        const auto shadow_records = BuildAttackRecords(sm, sp, d.shadow_train, d.shadow_test, rc);
        const auto target_records = BuildAttackRecords(tm, tp, d.target_train, d.target_test, rc);
        res.accuracy = EvaluateAttacks(shadow_records, target_records, rc);
        if (mia.save_features) {
          const std::string stem = "mia/features/s" + std::to_string(i) + "_t" +
                                   std::to_string(j) + "_e" + std::to_string(mia.epochs[c.e]) +
                                   "_n" + std::to_string(mia.train_sizes[c.s]) + "_r" +
                                   std::to_string(c.run);
          WriteAttackFeatures(ctx.Out(stem + "_shadow.jsonl"), shadow_records, false);
          WriteAttackFeatures(ctx.Out(stem + "_target.jsonl"), target_records, false);
        }
      });
    });
    for (size_t j = 0; j < nt; ++j) {
      for (size_t ci = 0; ci < nc; ++ci) {
        const Cell& c = cells[ci];
        WritePromptFile(ctx.Out("mia/prompts/target_t" + std::to_string(j) + "_e" +
                                std::to_string(mia.epochs[c.e]) + "_n" +
                                std::to_string(mia.train_sizes[c.s]) + "_r" +
                                std::to_string(c.run) + ".vppr"),
                        target_prompts[j * nc + ci]);
      }
    }

    std::ostringstream csv;
    csv << MiaCsvHeader();
    json cells_json = json::array();
    std::vector<double> gaps, ments;
    std::map<std::string, std::vector<std::vector<double>>> matrices;
    for (size_t k = 0; k < results.size(); ++k) {
      const size_t i = k / (nt * nc), j = (k / nc) % nt, ci = k % nc;
      const Cell& c = cells[ci];
      const Result& res = results[k];
      for (const auto& [family, acc] : res.accuracy) {
        csv << SettingName(shadows[i]) << "," << SettingName(targets[j]) << ","
            << mia.epochs[c.e] << "," << mia.train_sizes[c.s] << "," << c.run << "," << res.seed
            << "," << FormatDecimal(res.utility) << "," << FormatDecimal(res.gap) << ","
            << family << "," << FormatDecimal(acc) << "\n";
      }
      if (res.accuracy.contains("metric-ment")) {
        gaps.push_back(res.gap);
        ments.push_back(res.accuracy.at("metric-ment"));
      }
    }
    // Means over runs per (shadow, target, epochs, size).
    for (size_t i = 0; i < ns; ++i) {
      for (size_t j = 0; j < nt; ++j) {
        for (size_t e = 0; e < mia.epochs.size(); ++e) {
          for (size_t s = 0; s < mia.train_sizes.size(); ++s) {
            std::vector<double> u, g;
            std::map<std::string, std::vector<double>> acc;
            json runs = json::array();
            for (size_t ci = 0; ci < nc; ++ci) {
              if (cells[ci].e != e || cells[ci].s != s) continue;
              const Result& res = results[(i * nt + j) * nc + ci];
              u.push_back(res.utility);
              g.push_back(res.gap);
              json a;
              for (const auto& [f, v] : res.accuracy) {
                acc[f].push_back(v);
                a[f] = Round4(v);
              }
              runs.push_back({{"run", cells[ci].run},
                              {"seed", res.seed},
                              {"utility", Round4(res.utility)},
                              {"overfit_gap", Round4(res.gap)},
                              {"accuracy", a}});
            }
            json mean_acc;
            for (const auto& [f, v] : acc) mean_acc[f] = Round4(Mean(v));
            cells_json.push_back({{"shadow_setting", SettingName(shadows[i])},
                                  {"target_setting", SettingName(targets[j])},
                                  {"epochs", mia.epochs[e]},
                                  {"train_size", mia.train_sizes[s]},
                                  {"runs", runs},
                                  {"mean",
                                   {{"utility", Round4(Mean(u))},
                                    {"overfit_gap", Round4(Mean(g))},
                                    {"accuracy", mean_acc}}}});
          }
        }
      }
    }
    // Shadow x target matrices over all grid cells, per family.
    for (size_t k = 0; k < results.size(); ++k) {
      const size_t i = k / (nt * nc), j = (k / nc) % nt;
      for (const auto& [f, v] : results[k].accuracy) {
        auto& m = matrices[f];
        if (m.empty()) m.assign(ns, std::vector<double>(nt, 0.0));
        m[i][j] += v / static_cast<double>(nc);
      }
    }
    json matrices_json;
    for (const auto& [f, m] : matrices) {
      json rows = json::array();
      for (const auto& row : m) {
        json r = json::array();
        for (double v : row) r.push_back(Round4(v));
        rows.push_back(r);
      }
      json entry = {{"cells", rows}};
      if (ns == nt) {
        const MatrixSummary ms = SummarizeMatrix(m);
        entry["average_accuracy"] = Round4(ms.average_accuracy);
        entry["average_drop"] = Round4(ms.average_drop);
      }
      matrices_json[f] = entry;
    }
    json summary = {{"cells", cells_json}, {"matrices", matrices_json}};
    json shadow_names = json::array(), target_names = json::array();
    for (const Setting& s : shadows) shadow_names.push_back(SettingName(s));
    for (const Setting& s : targets) target_names.push_back(SettingName(s));
    summary["shadow_settings"] = shadow_names;
    summary["target_settings"] = target_names;
    summary["overfit_points"] = {{"gap", json::array()}, {"ment", json::array()}};
    for (size_t k = 0; k < gaps.size(); ++k) {
      summary["overfit_points"]["gap"].push_back(Round4(gaps[k]));
      summary["overfit_points"]["ment"].push_back(Round4(ments[k]));
    }
    try {
      summary["pearson_gap_ment"] = Round4(Pearson(gaps, ments));
    } catch (const Error&) {
      summary["pearson_gap_ment"] = nullptr;
    }
    return Finish(ctx, "mia-attack", csv.str(), summary);
  });
}

namespace {

// Compares the sigma = 0 rows of one run against the undefended evaluation.
json IdentityCheck(std::span<const TradeoffRow> rows, const DefensePoint& clean, uint64_t seed) {
  json acc;
  for (const auto& [f, v] : clean.accuracy) acc[f] = Round4(v);
  json out = {{"seed", seed}, {"utility", Round4(clean.utility)}, {"accuracy", acc}};
  bool any = false, identical = true;
  for (const TradeoffRow& r : rows) {
    if (r.sigma != 0.0) continue;
    any = true;
    const auto it = clean.accuracy.find(r.family);
    identical = identical && r.utility == clean.utility && it != clean.accuracy.end() &&
                r.accuracy == it->second;
  }
  out["sigma0_bit_identical"] = any ? json(identical) : json(nullptr);
  return out;
}

std::vector<TradeoffRow> DefendMia(Context& ctx, json* runs_json, json* undefended) {
  const ExperimentConfig& config = ctx.config();
  const DefenseSection& def = *config.defense;
  Require(config.mia.has_value(), ErrorCode::kConfig,
          "the mia defense context needs a mia section");
  const MiaSection& mia = *config.mia;
  const Setting target = mia.target_settings.front();
  const Setting shadow = ShadowSettings(mia).front();
  ctx.RequireModels({target, shadow});
  MakeMiaRunConfig(mia, {}, 1, 0);
  const FrozenClassifier& tm = ctx.Model(target.model);
  const FrozenClassifier& sm = ctx.Model(shadow.model);
  const Dataset& tdata = ctx.Data(target.dataset);
  const Dataset& sdata = ctx.Data(shadow.dataset);
  std::vector<std::vector<TradeoffRow>> per_run(def.runs);
  std::vector<DefensePoint> clean(def.runs);
  ParallelFor(static_cast<size_t>(def.runs), config.jobs, [&](size_t r) {
    const uint64_t seed = SplitSeed(config.seed ^ 0xdef, def.train_size, static_cast<int>(r));
    const MiaData d = MiaSplitData(tdata, sdata, def.train_size, seed);
    const MiaRunConfig rc = MakeMiaRunConfig(mia, ctx.Spec(tm), d.target_train.num_classes,
                                             DeriveSeed(seed, 0x300));
    const Prompt tp = RunStage("prompt-train", [&] {
      return TrainPrompt(tm, d.target_train, ctx.Spec(tm), rc.label_map,
                         ctx.Hyper(def.epochs, DeriveSeed(seed, 0x100)));
    });
    const Prompt sp = RunStage("prompt-train", [&] {
      return TrainPrompt(sm, d.shadow_train, ctx.Spec(sm), rc.label_map,
                         ctx.Hyper(def.epochs, DeriveSeed(seed, 0x200)));
    });
    const auto clean_shadow = BuildAttackRecords(sm, sp, d.shadow_train, d.shadow_test, rc);
    RunStage("attack", [&] {
      clean[r].utility = EvaluatePrompt(tm, tp, rc.label_map, d.target_test);
      const auto records = BuildAttackRecords(tm, tp, d.target_train, d.target_test, rc);
      clean[r].accuracy = EvaluateAttacks(clean_shadow, records, rc);
    });
    std::map<double, size_t> sigma_index;
    for (size_t k = 0; k < def.sigmas.size(); ++k) sigma_index.emplace(def.sigmas[k], k);
    auto evaluate = [&](double sigma, bool adaptive) {
      const size_t k = sigma_index.at(sigma);
      const Prompt noised_target = AddNoise(tp, {sigma, DeriveSeed(seed, 0x400 + k)});
      DefensePoint point;
      point.utility = EvaluatePrompt(tm, noised_target, rc.label_map, d.target_test);
      const auto target_records =
          BuildAttackRecords(tm, noised_target, d.target_train, d.target_test, rc);
      if (adaptive) {
        const Prompt noised_shadow = AddNoise(sp, {sigma, DeriveSeed(seed, 0x500 + k)});
        const auto shadow_records =
            BuildAttackRecords(sm, noised_shadow, d.shadow_train, d.shadow_test, rc);
        point.accuracy = EvaluateAttacks(shadow_records, target_records, rc);
      } else {
        point.accuracy = EvaluateAttacks(clean_shadow, target_records, rc);
      }
      return point;
    };
    RunStage("attack", [&] {
      for (const std::string& adversary : def.adversaries) {
        auto rows = EvalDefense("mia", def.sigmas, adversary == "adaptive", seed, evaluate);
        per_run[r].insert(per_run[r].end(), rows.begin(), rows.end());
      }
    });
  });
  std::vector<TradeoffRow> rows;
  for (size_t r = 0; r < per_run.size(); ++r) {
    runs_json->push_back(per_run[r].empty() ? 0 : per_run[r].front().seed);
    undefended->push_back(IdentityCheck(per_run[r], clean[r], per_run[r].front().seed));
    rows.insert(rows.end(), per_run[r].begin(), per_run[r].end());
  }
  return rows;
}

std::vector<TradeoffRow> DefendPia(Context& ctx, json* runs_json, json* undefended) {
  const ExperimentConfig& config = ctx.config();
  const DefenseSection& def = *config.defense;
  Require(config.pia.has_value(), ErrorCode::kConfig,
          "the pia defense context needs a pia section");
  const PiaSection& pia = *config.pia;
  ctx.RequireModels({pia.settings.front()});
  const PiaTask task = MakeTask(pia);
  const PiaSets sets = GenerateOrLoadPia(ctx, 0, false);
  const Setting& s = pia.settings.front();
  const FrozenClassifier& model = ctx.Model(s.model);
  const Dataset& data = ctx.Data(s.dataset);
  const Dataset validation = Subset(data, sets.validation);
  const LabelMap map{data.num_classes};
  const uint64_t seed = DeriveSeed(config.seed, 0x44454600);
  auto noise_set = [&](const PromptSet& set, double sigma, uint64_t base) {
    PromptSet out = set;
    for (size_t i = 0; i < out.size(); ++i) {
      out.prompts[i] = AddNoise(set.prompts[i], {sigma, DeriveSeed(base, i)});
    }
    return out;
  };
  const PiaAttackModel naive = RunStage("attack", [&] {
    return TrainPiaModel(sets.shadow, task.num_labels(),
                         MakePiaHyper(pia, sets.shadow, DeriveSeed(seed, 1)));
  });
  std::map<double, size_t> sigma_index;
  for (size_t k = 0; k < def.sigmas.size(); ++k) sigma_index.emplace(def.sigmas[k], k);
  auto evaluate = [&](double sigma, bool adaptive) {
    const size_t k = sigma_index.at(sigma);
    const PromptSet targets = noise_set(sets.target, sigma, DeriveSeed(seed, 0x100 + k));
    DefensePoint point;
    point.utility = MeanUtility(model, targets, map, validation);
    if (adaptive) {
      const PromptSet shadows = noise_set(sets.shadow, sigma, DeriveSeed(seed, 0x200 + k));
      const PiaAttackModel attack = RunStage("attack", [&] {
        return TrainPiaModel(shadows, task.num_labels(),
                             MakePiaHyper(pia, shadows, DeriveSeed(seed, 1)));
      });
      point.accuracy["pia"] = EvaluatePia(attack, targets);
    } else {
      point.accuracy["pia"] = EvaluatePia(naive, targets);
    }
    return point;
  };
  std::vector<TradeoffRow> rows;
  for (const std::string& adversary : def.adversaries) {
    auto r = EvalDefense("pia", def.sigmas, adversary == "adaptive", seed, evaluate);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  DefensePoint clean;
  clean.utility = MeanUtility(model, sets.target, map, validation);
  clean.accuracy["pia"] = EvaluatePia(naive, sets.target);
  runs_json->push_back(seed);
  undefended->push_back(IdentityCheck(rows, clean, seed));
  return rows;
}

}  // namespace

Report RunDefend(const ExperimentConfig& config) {
  return RunStage("defend", [&] {
    Require(config.defense.has_value(), ErrorCode::kConfig, "config has no defense section");
    const DefenseSection& def = *config.defense;
    Require(!def.sigmas.empty(), ErrorCode::kConfig, "defense sigma grid is empty");
    for (double s : def.sigmas) {
      Require(s >= 0.0, ErrorCode::kConfig, "negative sigma in the defense grid");
    }
    Require(def.runs >= 1, ErrorCode::kConfig, "defense.runs must be at least 1");
    Context ctx(config);
    json seeds = json::array();
    json undefended = json::array();
    const std::vector<TradeoffRow> rows = def.context == "mia"
                                              ? DefendMia(ctx, &seeds, &undefended)
                                              : DefendPia(ctx, &seeds, &undefended);
    // Means over runs per (sigma, adversary, family).
    json points = json::array();
    for (double sigma : def.sigmas) {
      std::vector<double> utility;
      std::map<std::string, std::map<std::string, std::vector<double>>> acc;
      std::set<uint64_t> seen;
      for (const TradeoffRow& r : rows) {
        if (r.sigma != sigma) continue;
        if (seen.insert(r.seed).second) utility.push_back(r.utility);
        acc[r.adaptive ? "adaptive" : "naive"][r.family].push_back(r.accuracy);
      }
      json entry = {{"sigma", Round4(sigma)}, {"utility", Round4(Mean(utility))}};
      for (const auto& [adversary, fams] : acc) {
        json a;
        for (const auto& [f, v] : fams) a[f] = Round4(Mean(v));
        entry[adversary] = a;
      }
      points.push_back(entry);
    }
    const double chosen = FindTradeoffSigma(rows, def.utility_ratio, def.attack_ceiling);
    json summary = {{"context", def.context},
                    {"seeds", seeds},
                    {"undefended", undefended},
                    {"points", points},
                    {"utility_ratio", def.utility_ratio},
                    {"attack_ceiling", def.attack_ceiling}};
    summary["tradeoff_sigma"] = chosen >= 0 ? json(Round4(chosen)) : json(nullptr);
    return Finish(ctx, "defend", TradeoffCsv(rows), summary);
  });
}

namespace {

void Flatten(const json& j, const std::string& prefix, std::ostringstream& out) {
  if (j.is_object()) {
    for (const auto& item : j.items()) {
      Flatten(item.value(), prefix.empty() ? item.key() : prefix + "." + item.key(), out);
    }
  } else if (j.is_array()) {
    for (size_t i = 0; i < j.size(); ++i) Flatten(j[i], prefix + "[" + std::to_string(i) + "]", out);
  } else if (j.is_number_float()) {
    out << prefix << "," << FormatDecimal(j.get<double>()) << "\n";
  } else if (j.is_null()) {
    out << prefix << ",\n";
  } else {
    out << prefix << "," << (j.is_string() ? j.get<std::string>() : j.dump()) << "\n";
  }
}

std::vector<std::string> Names(const json& j) {
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(v.get<std::string>());
  return out;
}

std::vector<std::vector<double>> Matrix2(const json& j) {
  std::vector<std::vector<double>> out;
  for (const auto& row : j) out.push_back(row.get<std::vector<double>>());
  return out;
}

}  // namespace

Report RunReport(const ExperimentConfig& config) {
  return RunStage("report", [&] {
    Context ctx(config);
    json stages;
    for (const char* stem : {"pretrain", "prompt_train", "pia_gen", "pia_attack", "mia_attack",
                             "defend"}) {
      const auto path = ctx.Out(std::string(stem) + "_summary.json");
      if (!std::filesystem::exists(path)) continue;
      try {
        stages[stem] = json::parse(ReadTextFile(path));
      } catch (const json::exception& e) {
        Fail(ErrorCode::kIo, path.string() + ": " + e.what());
      }
    }
    std::vector<std::filesystem::path> plots;
    auto plot = [&](const std::string& name, const std::string& svg) {
      WriteTextFile(ctx.Out("plots/" + name), svg);
      plots.push_back("plots/" + name);
    };
    if (stages.empty()) {
      std::cerr << "vpleak: report: no stage summaries in " << config.OutputDir().string()
                << "; nothing to report\n";
    }
    if (stages.contains("defend")) {
      const json& d = stages["defend"];
      Series utility{"utility", {}, {}};
      std::map<std::string, std::map<std::string, Series>> attacks;
      for (const json& p : d["points"]) {
        const double sigma = p["sigma"];
        utility.x.push_back(sigma);
        utility.y.push_back(p["utility"]);
        for (const char* adversary : {"naive", "adaptive"}) {
          if (!p.contains(adversary)) continue;
          for (const auto& item : p[adversary].items()) {
            Series& s = attacks[adversary][item.key()];
            s.name = item.key();
            s.x.push_back(sigma);
            s.y.push_back(item.value());
          }
        }
      }
      plot("utility_vs_sigma.svg",
           LinePlotSvg({"Prompt utility under noise", "sigma", "utility"}, {utility}));
      for (const auto& [adversary, fams] : attacks) {
        std::vector<Series> series;
        for (const auto& [f, s] : fams) series.push_back(s);
        plot("attack_vs_sigma_" + adversary + ".svg",
             LinePlotSvg({"Attack accuracy (" + adversary + " adversary)", "sigma", "accuracy"},
                         series));
      }
    }
    if (stages.contains("mia_attack")) {
      const json& m = stages["mia_attack"];
      const json& pts = m["overfit_points"];
      if (!pts["gap"].empty()) {
        const std::string note =
            m["pearson_gap_ment"].is_null()
                ? "pearson r undefined"
                : "pearson r = " + FormatDecimal(m["pearson_gap_ment"].get<double>());
        plot("overfit_scatter.svg",
             ScatterPlotSvg({"Overfitting vs metric-ment accuracy", "overfit gap", "accuracy"},
                            {"runs", pts["gap"].get<std::vector<double>>(),
                             pts["ment"].get<std::vector<double>>()},
                            note));
      }
      std::map<int64_t, Series> by_size;
      for (const json& c : m["cells"]) {
        if (!c["mean"]["accuracy"].contains("metric-ment")) continue;
        if (c["shadow_setting"] != m["shadow_settings"][0] ||
            c["target_setting"] != m["target_settings"][0]) {
          continue;
        }
        const int64_t n = c["train_size"];
        Series& s = by_size[n];
        s.name = "train size " + std::to_string(n);
        s.x.push_back(c["epochs"].get<double>());
        s.y.push_back(c["mean"]["accuracy"]["metric-ment"]);
      }
      if (!by_size.empty()) {
        std::vector<Series> series;
        for (auto& [n, s] : by_size) series.push_back(s);
        plot("epoch_size_effect.svg",
             LinePlotSvg({"metric-ment accuracy by epochs", "epochs", "accuracy"}, series));
      }
      if (m["shadow_settings"].size() > 1 || m["target_settings"].size() > 1) {
        for (const auto& item : m["matrices"].items()) {
          plot("heatmap_mia_" + item.key() + ".svg",
               HeatmapSvg({"MIA " + item.key(), "target", "shadow"},
                          Names(m["shadow_settings"]), Names(m["target_settings"]),
                          Matrix2(item.value()["cells"])));
        }
      }
    }
    if (stages.contains("pia_attack")) {
      const json& p = stages["pia_attack"];
      plot("heatmap_pia.svg", HeatmapSvg({"PIA " + p["property"].get<std::string>(), "target",
                                          "shadow"},
                                         Names(p["settings"]), Names(p["settings"]),
                                         Matrix2(p["matrix"])));
    }
    json summary = {{"stages", stages}};
    json plot_names = json::array();
    for (const auto& p : plots) plot_names.push_back(p.generic_string());
    summary["plots"] = plot_names;
    std::ostringstream csv;
    csv << "key,value\n";
    Flatten(stages, "", csv);
    Report report = Finish(ctx, "report", csv.str(), summary);
    report.files.insert(report.files.end(), plots.begin(), plots.end());
    return report;
  });
}

std::vector<Report> RunExperiment(const ExperimentConfig& config) {
  std::vector<Report> reports;
  if (!config.models.empty()) reports.push_back(RunPretrain(config));
  if (config.prompt_train) reports.push_back(RunPromptTrain(config));
  if (config.pia) {
    reports.push_back(RunPiaGen(config));
    reports.push_back(RunPiaAttack(config));
  }
  if (config.mia) reports.push_back(RunMiaAttack(config));
  if (config.defense) reports.push_back(RunDefend(config));
  reports.push_back(RunReport(config));
  return reports;
}

}  // namespace vpleak
