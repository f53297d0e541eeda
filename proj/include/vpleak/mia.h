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

// Membership inference against visual prompts: neural-network attacks on
// top-5 posteriors, threshold attacks on per-sample metrics, and white-box
// attacks on prompt gradients.

#ifndef VPLEAK_MIA_H_
#define VPLEAK_MIA_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vpleak/data.h"
#include "vpleak/model_zoo.h"
#include "vpleak/nn.h"
#include "vpleak/prompt.h"
#include "vpleak/vpl.h"

namespace vpleak {

// Four disjoint index sets drawn from one pool.
struct MiaSplits {
  std::vector<size_t> target_train;
  std::vector<size_t> target_test;
  std::vector<size_t> shadow_train;
  std::vector<size_t> shadow_test;
};

// Shuffles `pool` with `seed` and cuts consecutive chunks of the requested
// sizes (target_train, target_test, shadow_train, shadow_test). Throws
// kInput when the sizes oversubscribe the pool.
MiaSplits MakeSplits(std::span<const size_t> pool,
                     const std::array<size_t, 4>& sizes, uint64_t seed);

enum class Metric { kCorr, kConf, kEnt, kMent };

std::string_view MetricName(Metric metric);
Metric ParseMetric(std::string_view name);
inline constexpr std::array<Metric, 4> kAllMetrics = {Metric::kCorr, Metric::kConf,
                                                      Metric::kEnt, Metric::kMent};

// corr: 1 if argmax == y else 0; conf: p_y; ent: -sum p ln p;
// ment: -(1-p_y) ln p_y - sum_{i != y} p_i ln(1 - p_i). Probabilities are
// clamped to [1e-12, 1 - 1e-12] for ent and ment.
double MetricScore(Metric metric, const Vector& posterior, int true_label);

enum class Direction { kAtLeast, kAtMost };  // member iff score >= / <= tau

// conf: >=, ent and ment: <=, corr: >= 1.
Direction MetricDirection(Metric metric);

enum class ThresholdMode { kClassWise, kOverall };

struct ScoredSample {
  double score = 0.0;
  int true_class = 0;
  bool member = false;
};

struct ThresholdTable {
  Metric metric = Metric::kConf;
  ThresholdMode mode = ThresholdMode::kClassWise;
  Direction direction = Direction::kAtLeast;
  double overall = 0.0;
  std::map<int, double> per_class;

  // Classes without their own threshold use the overall one.
  bool IsMember(double score, int true_class) const;
};

struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;
};

// Best threshold over the midpoints of adjacent distinct scores plus
// -inf/+inf sentinels; ties go to the smaller threshold.
ThresholdChoice BestThreshold(std::span<const ScoredSample> samples,
                              Direction direction);

// Per-class thresholds (falling back to the overall threshold for classes
// that lack either members or non-members) or a single overall one. The
// corr metric needs no fitting: member iff the prediction is correct.
ThresholdTable FitThresholds(std::span<const ScoredSample> shadow, Metric metric,
                             ThresholdMode mode);

enum class FeatureVariant { kTop5, kMetric, kGradient };

std::string_view VariantName(FeatureVariant variant);

struct AttackRecord {
  FeatureVariant variant = FeatureVariant::kTop5;
  int64_t sample_id = 0;
  int true_class = 0;
  int member = 0;
  std::array<double, 5> top5{};  // descending, zero-padded when n < 5
  Vector posterior;               // full mapped posterior
  double loss = 0.0;              // -ln posterior[true_class]
  int indicator = 0;              // argmax == true_class
  std::vector<double> gradient;   // prompt gradient over border cells
};

// Queries the prompted model on every member (label 1) and non-member
// (label 0) sample. Throws kInput when the two sets share a sample id.
std::vector<AttackRecord> NnAttackBuild(const FrozenClassifier& model,
                                        const Prompt& prompt,
                                        const Dataset& members,
                                        const Dataset& nonmembers,
                                        const LabelMap& label_map);

// As NnAttackBuild, plus the per-sample prompt gradient.
std::vector<AttackRecord> GradientAttackBuild(const FrozenClassifier& model,
                                              const Prompt& prompt,
                                              const Dataset& members,
                                              const Dataset& nonmembers,
                                              const LabelMap& label_map);

std::vector<ScoredSample> ScoreRecords(std::span<const AttackRecord> records,
                                       Metric metric);

class MembershipAttack {
 public:
  virtual ~MembershipAttack() = default;
  virtual std::string family() const = 0;
  virtual bool PredictMember(const AttackRecord& record) const = 0;
};

class MetricAttack : public MembershipAttack {
 public:
  explicit MetricAttack(ThresholdTable table) : table_(std::move(table)) {}

  std::string family() const override;
  bool PredictMember(const AttackRecord& record) const override;
  const ThresholdTable& table() const { return table_; }

 private:
  ThresholdTable table_;
};

struct AttackHyper {
  std::vector<double> learning_rates = {1e-2, 1e-3, 1e-4, 1e-5};
  int epochs = 100;
  int hidden = 32;
  int batch_size = 32;
  double holdout_fraction = 0.1;
  uint64_t seed = 0;
  // Sub-encoder widths of the gradient attack.
  int gradient_width = 16;
  int top5_width = 16;
  int loss_width = 4;
  int indicator_width = 4;
};

// 2-layer MLP over the top-5 posteriors.
class NnAttack : public MembershipAttack {
 public:
  NnAttack(nn::Network network, double learning_rate, double holdout_accuracy);

  std::string family() const override { return "nn"; }
  bool PredictMember(const AttackRecord& record) const override;
  double selected_learning_rate() const { return learning_rate_; }
  double holdout_accuracy() const { return holdout_accuracy_; }
  std::string digest() const { return nn::ParamDigest(network_); }

 private:
  nn::Network network_;
  double learning_rate_;
  double holdout_accuracy_;
};

// Four sub-encoders (gradient, top-5, loss, indicator) concatenated into a
// 2-layer classifier head.
class GradientAttackNet {
 public:
  GradientAttackNet(int gradient_size, const AttackHyper& hyper);

  void Initialize(uint64_t seed);
  // Per-block standardization fitted on training records.
  void FitScaling(std::span<const AttackRecord> records);
  Vector Forward(const AttackRecord& record, bool zero_gradient = false) const;
  void Train(std::span<const AttackRecord> records, double learning_rate,
             const AttackHyper& hyper);
  std::string Digest() const;
  int gradient_size() const { return gradient_size_; }

 private:
  struct Inputs {
    Vector gradient, top5, loss, indicator;
  };
  Inputs Encode(const AttackRecord& record, bool zero_gradient) const;

  int gradient_size_;
  std::array<nn::Network, 4> encoders_;
  nn::Network head_;
  double gradient_scale_ = 1.0;
  double loss_mean_ = 0.0;
  double loss_scale_ = 1.0;
};

class GradientAttack : public MembershipAttack {
 public:
  GradientAttack(GradientAttackNet net, double learning_rate,
                 double holdout_accuracy);

  std::string family() const override { return "gradient"; }
  bool PredictMember(const AttackRecord& record) const override;
  // Same decision with the gradient sub-input zeroed (ablation).
  bool PredictMemberWithoutGradient(const AttackRecord& record) const;
  double selected_learning_rate() const { return learning_rate_; }
  std::string digest() const { return net_.Digest(); }

 private:
  GradientAttackNet net_;
  double learning_rate_;
  double holdout_accuracy_;
};

// Grid search over hyper.learning_rates: train on 90% of the records, keep
// the rate with the best held-out accuracy (ties: smaller rate). Throws
// kTraining when only one membership label is present.
NnAttack TrainNnAttack(std::span<const AttackRecord> records,
                       const AttackHyper& hyper);
GradientAttack TrainGradientAttack(std::span<const AttackRecord> records,
                                   const AttackHyper& hyper);

// Fraction of correct membership decisions. Throws kInput on empty input.
double EvaluateMia(const MembershipAttack& attack,
                   std::span<const AttackRecord> records);

// Train accuracy minus test accuracy of the prompt.
double OverfittingLevel(const FrozenClassifier& model, const Prompt& prompt,
                        const LabelMap& label_map, const Dataset& train_set,
                        const Dataset& test_set);

// Throws kInput on size mismatch / fewer than 2 points, kUndefined on zero
// variance.
double Pearson(std::span<const double> xs, std::span<const double> ys);

// Line-delimited JSON, one record per line. Without `include_gradient`,
// gradient records are written as top-5 records.
void WriteAttackFeatures(const std::filesystem::path& path,
                         std::span<const AttackRecord> records,
                         bool include_gradient = true);
std::vector<AttackRecord> ReadAttackFeatures(const std::filesystem::path& path);

// End-to-end membership inference for one (target, shadow) configuration.
struct MiaRunConfig {
  PromptSpec spec;
  LabelMap label_map;
  PromptHyper target_hyper;
  PromptHyper shadow_hyper;
  AttackHyper attack_hyper;
  ThresholdMode threshold_mode = ThresholdMode::kClassWise;
  bool run_nn = true;
  bool run_gradient = true;
  std::vector<Metric> metrics = {kAllMetrics.begin(), kAllMetrics.end()};
};

struct MiaData {
  Dataset target_train;
  Dataset target_test;
  Dataset shadow_train;
  Dataset shadow_test;
};

MiaData MaterializeSplits(const Dataset& target_pool, const Dataset& shadow_pool,
                          const MiaSplits& splits);

struct MiaOutcome {
  double utility = 0.0;      // target prompt accuracy on target_test
  double overfit_gap = 0.0;  // train - test accuracy of the target prompt
  // Keyed "nn", "gradient", "metric-corr", ...
  std::map<std::string, double> accuracy;
};

// Gradient records when config.run_gradient, top-5 records otherwise.
std::vector<AttackRecord> BuildAttackRecords(const FrozenClassifier& model,
                                             const Prompt& prompt,
                                             const Dataset& members,
                                             const Dataset& nonmembers,
                                             const MiaRunConfig& config);

// Trains every configured attack on the shadow records and scores it on
// the target records, keyed by family.
std::map<std::string, double> EvaluateAttacks(std::span<const AttackRecord> shadow,
                                              std::span<const AttackRecord> target,
                                              const MiaRunConfig& config);

// Attacks a given (target, shadow) prompt pair.
MiaOutcome AttackPrompts(const FrozenClassifier& target_model,
                         const FrozenClassifier& shadow_model,
                         const Prompt& target_prompt, const Prompt& shadow_prompt,
                         const MiaData& data, const MiaRunConfig& config);

struct MiaRun {
  Prompt target_prompt;
  Prompt shadow_prompt;
  MiaOutcome outcome;
};

// Trains both prompts, then attacks.
MiaRun RunMia(const FrozenClassifier& target_model,
              const FrozenClassifier& shadow_model, const MiaData& data,
              const MiaRunConfig& config);

}  // namespace vpleak

#endif  // VPLEAK_MIA_H_
