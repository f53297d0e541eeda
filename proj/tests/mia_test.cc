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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "test_support.h"
#include "vpleak/mia.h"

namespace vpleak {
namespace {

using testing::ToyModel;
using testing::ToySpec;

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(MakeSplits, DisjointCover) {
  std::vector<size_t> pool(8000);
  std::iota(pool.begin(), pool.end(), 0);
  const MiaSplits s = MakeSplits(pool, {2000, 2000, 2000, 2000}, 3);
  std::set<size_t> all;
  for (const auto* part : {&s.target_train, &s.target_test, &s.shadow_train, &s.shadow_test}) {
    EXPECT_EQ(part->size(), 2000u);
    all.insert(part->begin(), part->end());
  }
  EXPECT_EQ(all.size(), 8000u);
}

TEST(MakeSplits, SmallAndOversubscribed) {
  std::vector<size_t> pool(50);
  std::iota(pool.begin(), pool.end(), 100);
  const MiaSplits s = MakeSplits(pool, {10, 10, 10, 10}, 1);
  std::set<size_t> all;
  for (const auto* part : {&s.target_train, &s.target_test, &s.shadow_train, &s.shadow_test}) {
    all.insert(part->begin(), part->end());
  }
  EXPECT_EQ(all.size(), 40u);
  EXPECT_GE(*all.begin(), 100u);
  EXPECT_VPLEAK_ERROR(MakeSplits(pool, {15, 15, 15, 15}, 1), ErrorCode::kInput);
}

TEST(MetricScore, OneHotCertainty) {
  const Vector p = (Vector(3) << 0.0, 1.0, 0.0).finished();
  EXPECT_EQ(MetricScore(Metric::kCorr, p, 1), 1.0);
  EXPECT_EQ(MetricScore(Metric::kCorr, p, 0), 0.0);
  EXPECT_NEAR(MetricScore(Metric::kConf, p, 1), 1.0, 1e-9);
  EXPECT_NEAR(MetricScore(Metric::kEnt, p, 1), 0.0, 1e-9);
  EXPECT_NEAR(MetricScore(Metric::kMent, p, 1), 0.0, 1e-9);
}

TEST(MetricScore, BinaryUniform) {
  const Vector p = (Vector(2) << 0.5, 0.5).finished();
  EXPECT_NEAR(MetricScore(Metric::kEnt, p, 0), std::log(2.0), 1e-9);
  EXPECT_NEAR(MetricScore(Metric::kMent, p, 0), std::log(2.0), 1e-9);
  EXPECT_NEAR(MetricScore(Metric::kConf, p, 0), 0.5, 1e-9);
}

TEST(MetricScore, UniformOverN) {
  for (int n : {3, 4, 8, 100}) {
    const Vector p = Vector::Constant(n, 1.0 / n);
    EXPECT_NEAR(MetricScore(Metric::kEnt, p, 0), std::log(static_cast<double>(n)), 1e-9);
    // ment: -(1 - 1/n) ln(1/n) - (n - 1)(1/n) ln(1 - 1/n)
    const double q = 1.0 / n;
    EXPECT_NEAR(MetricScore(Metric::kMent, p, 0),
                -(1 - q) * std::log(q) - (n - 1) * q * std::log(1 - q), 1e-9);
  }
}

TEST(MetricScore, LabelOutOfRange) {
  const Vector p = Vector::Constant(4, 0.25);
  EXPECT_VPLEAK_ERROR(MetricScore(Metric::kEnt, p, 4), ErrorCode::kInput);
  EXPECT_VPLEAK_ERROR(ParseMetric("loss"), ErrorCode::kConfig);
  for (Metric m : kAllMetrics) EXPECT_EQ(ParseMetric(MetricName(m)), m);
}

// Accuracy of "member iff score >= t" (or <= t) for every t in the scores
// plus both infinities.
double ExhaustiveBest(const std::vector<ScoredSample>& s, Direction dir) {
  std::vector<double> candidates = {-kInf, kInf};
  for (const auto& x : s) candidates.push_back(x.score);
  double best = 0.0;
  for (double t : candidates) {
    size_t correct = 0;
    for (const auto& x : s) {
      const bool says = dir == Direction::kAtLeast ? x.score >= t : x.score <= t;
      correct += says == x.member;
    }
    best = std::max(best, static_cast<double>(correct) / s.size());
  }
  return best;
}

double AccuracyAt(const std::vector<ScoredSample>& s, Direction dir, double t) {
  size_t correct = 0;
  for (const auto& x : s) {
    const bool says = dir == Direction::kAtLeast ? x.score >= t : x.score <= t;
    correct += says == x.member;
  }
  return static_cast<double>(correct) / s.size();
}

TEST(BestThreshold, MatchesExhaustiveSweep) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = std::uniform_int_distribution<size_t>(1, 1000)(rng);
    const bool coarse = trial % 3 == 0;  // many ties
    const double shift = std::uniform_real_distribution<double>(-1, 1)(rng);
    std::vector<ScoredSample> s(n);
    for (auto& x : s) {
      x.member = std::bernoulli_distribution(0.5)(rng);
      double v = std::normal_distribution<double>(x.member ? shift : 0.0, 1.0)(rng);
      if (coarse) v = std::round(v * 2) / 2;
      x.score = v;
      x.true_class = 0;
    }
    for (Direction dir : {Direction::kAtLeast, Direction::kAtMost}) {
      const ThresholdChoice c = BestThreshold(s, dir);
      const double oracle = ExhaustiveBest(s, dir);
      EXPECT_NEAR(c.accuracy, oracle, 1e-12) << "trial " << trial;
      EXPECT_NEAR(AccuracyAt(s, dir, c.threshold), oracle, 1e-12) << "trial " << trial;
    }
  }
}

TEST(FitThresholds, SeparableMidpoint) {
  const std::vector<ScoredSample> s = {
      {0.9, 0, true}, {0.8, 0, true}, {0.2, 0, false}, {0.1, 0, false}};
  const ThresholdTable t = FitThresholds(s, Metric::kConf, ThresholdMode::kOverall);
  EXPECT_DOUBLE_EQ(t.overall, 0.5);
  EXPECT_EQ(BestThreshold(s, Direction::kAtLeast).accuracy, 1.0);
  EXPECT_TRUE(t.IsMember(0.8, 0));
  EXPECT_FALSE(t.IsMember(0.2, 0));
}

TEST(FitThresholds, InterleavedCapsAtHalf) {
  std::vector<ScoredSample> s;
  for (int i = 0; i < 20; ++i) s.push_back({static_cast<double>(i), 0, i % 2 == 1});
  EXPECT_DOUBLE_EQ(BestThreshold(s, Direction::kAtLeast).accuracy, ExhaustiveBest(s, Direction::kAtLeast));
  std::vector<ScoredSample> balanced;
  for (int i = 0; i < 20; ++i) balanced.push_back({static_cast<double>(i % 2), 0, i % 4 < 2});
  EXPECT_DOUBLE_EQ(BestThreshold(balanced, Direction::kAtLeast).accuracy, 0.5);
}

TEST(FitThresholds, CorrIsFixed) {
  const std::vector<ScoredSample> s = {{0.0, 0, true}, {1.0, 0, false}};
  const ThresholdTable t = FitThresholds(s, Metric::kCorr, ThresholdMode::kClassWise);
  EXPECT_EQ(t.overall, 1.0);
  EXPECT_TRUE(t.per_class.empty());
  EXPECT_TRUE(t.IsMember(1.0, 3));
  EXPECT_FALSE(t.IsMember(0.0, 3));
}

TEST(FitThresholds, ClassWiseFallsBackToOverall) {
  std::vector<ScoredSample> s;
  for (int i = 0; i < 10; ++i) {
    s.push_back({0.9 - 0.01 * i, 0, true});
    s.push_back({0.3 + 0.01 * i, 0, false});
    s.push_back({0.95, 1, true});  // class 1 has no non-members
  }
  const ThresholdTable t = FitThresholds(s, Metric::kConf, ThresholdMode::kClassWise);
  EXPECT_TRUE(t.per_class.contains(0));
  EXPECT_FALSE(t.per_class.contains(1));
  EXPECT_FALSE(t.per_class.contains(2));
  EXPECT_EQ(t.IsMember(t.overall, 2), true);
  EXPECT_EQ(MetricDirection(Metric::kMent), Direction::kAtMost);
  EXPECT_EQ(MetricDirection(Metric::kConf), Direction::kAtLeast);
}

const Dataset& Base8() {
  static const Dataset data = [] {
    DatasetDescriptor d = testing::ToyBase();
    d.num_samples = 4000;
    d.seed = 55;
    return GenerateDataset(d);
  }();
  return data;
}

Dataset Range(const Dataset& d, size_t begin, size_t n) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), begin);
  return Subset(d, idx);
}

TEST(NnAttackBuild, EightClassesAndCounts) {
  const Prompt prompt = testing::RandomPrompt(ToySpec(), 2, 0.2);
  const auto records =
      NnAttackBuild(ToyModel(), prompt, Range(Base8(), 0, 2000), Range(Base8(), 2000, 2000),
                    LabelMap{8});
  ASSERT_EQ(records.size(), 4000u);
  size_t members = 0;
  for (const AttackRecord& r : records) {
    members += r.member;
    EXPECT_TRUE(std::is_sorted(r.top5.rbegin(), r.top5.rend()));
    std::vector<double> sorted(r.posterior.data(), r.posterior.data() + 8);
    std::sort(sorted.rbegin(), sorted.rend());
    for (int i = 0; i < 5; ++i) EXPECT_EQ(r.top5[i], sorted[i]);
  }
  EXPECT_EQ(members, 2000u);
}

TEST(NnAttackBuild, ZeroPaddingAndOverlap) {
  const Prompt prompt = Prompt::Zero(ToySpec());
  Dataset members = Range(Base8(), 0, 20), nonmembers = Range(Base8(), 20, 20);
  for (int& l : members.labels) l %= 3;
  for (int& l : nonmembers.labels) l %= 3;
  const auto records = NnAttackBuild(ToyModel(), prompt, members, nonmembers, LabelMap{3});
  for (const AttackRecord& r : records) {
    EXPECT_EQ(r.top5[3], 0.0);
    EXPECT_EQ(r.top5[4], 0.0);
    EXPECT_GT(r.top5[2], 0.0);
  }
  EXPECT_VPLEAK_ERROR(
      NnAttackBuild(ToyModel(), prompt, members, Range(Base8(), 10, 20), LabelMap{8}),
      ErrorCode::kInput);
}

TEST(GradientAttackBuild, FieldsConsistent) {
  const PromptSpec spec = ToySpec();
  const Prompt prompt = testing::RandomPrompt(spec, 21, 0.2);
  Dataset members = Range(testing::ToyData(), 0, 15);
  Dataset nonmembers = Range(testing::ToyData(), 15, 15);
  const auto records = GradientAttackBuild(ToyModel(), prompt, members, nonmembers, LabelMap{4});
  const std::vector<int> border = BorderIndices(spec);
  for (size_t k = 0; k < records.size(); ++k) {
    const AttackRecord& r = records[k];
    const Dataset& src = k < 15 ? members : nonmembers;
    const size_t i = k % 15;
    EXPECT_EQ(r.indicator, nn::Argmax(r.posterior) == r.true_class ? 1 : 0);
    EXPECT_NEAR(r.loss, -std::log(r.posterior[r.true_class]), 1e-6);
    const Vector g = InputGradient(ToyModel(), src.images[i], prompt, LabelMap{4}, src.labels[i]);
    ASSERT_EQ(r.gradient.size(), border.size());
    for (size_t j = 0; j < border.size(); ++j) EXPECT_EQ(r.gradient[j], g[border[j]]);
  }
}

// Synthetic record; `signal` lands in top5 and, optionally, in the gradient.
AttackRecord Synthetic(bool member, double top1, std::vector<double> gradient = {}) {
  AttackRecord r;
  r.member = member;
  r.top5 = {top1, (1 - top1) / 2, (1 - top1) / 4, (1 - top1) / 8, (1 - top1) / 8};
  r.posterior = Vector::Map(r.top5.data(), 5);
  r.loss = -std::log(top1);
  r.indicator = 1;
  r.gradient = std::move(gradient);
  r.variant = r.gradient.empty() ? FeatureVariant::kTop5 : FeatureVariant::kGradient;
  return r;
}

AttackHyper FastHyper(uint64_t seed = 3) {
  AttackHyper h;
  h.learning_rates = {1e-2, 1e-3};
  h.epochs = 30;
  h.seed = seed;
  return h;
}

TEST(TrainNnAttack, SeparableAndDeterministic) {
  std::vector<AttackRecord> records;
  for (int i = 0; i < 200; ++i) records.push_back(Synthetic(i % 2 == 0, i % 2 == 0 ? 1.0 : 0.2));
  const NnAttack a = TrainNnAttack(records, FastHyper());
  EXPECT_GE(a.holdout_accuracy(), 0.95);
  EXPECT_GE(EvaluateMia(a, records), 0.95);
  const NnAttack b = TrainNnAttack(records, FastHyper());
  EXPECT_EQ(a.selected_learning_rate(), b.selected_learning_rate());
  EXPECT_EQ(a.digest(), b.digest());
}

TEST(TrainNnAttack, ShuffledLabelsNearChance) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.3, 1.0);
  std::vector<AttackRecord> train, held;
  for (int i = 0; i < 400; ++i) train.push_back(Synthetic(i % 2 == 0, u(rng)));
  for (int i = 0; i < 1000; ++i) held.push_back(Synthetic(i % 2 == 0, u(rng)));
  const NnAttack a = TrainNnAttack(train, FastHyper());
  EXPECT_NEAR(EvaluateMia(a, held), 0.5, 0.1);
}

TEST(TrainNnAttack, SingleLabelRejected) {
  std::vector<AttackRecord> records(10, Synthetic(true, 0.9));
  EXPECT_VPLEAK_ERROR(TrainNnAttack(records, FastHyper()), ErrorCode::kTraining);
}

std::vector<AttackRecord> GradientToy(int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<AttackRecord> out;
  for (int i = 0; i < n; ++i) {
    const bool member = i % 2 == 0;
    std::vector<double> grad(24);
    for (double& v : grad) v = g(rng) * (member ? 0.1 : 1.0);
    grad[0] = member ? -2.0 : 2.0;
    out.push_back(Synthetic(member, 0.7, grad));  // top5 carries no signal
  }
  return out;
}

TEST(TrainGradientAttack, SeparableLiveAndDeterministic) {
  const auto train = GradientToy(300, 1);
  const auto held = GradientToy(200, 2);
  const GradientAttack a = TrainGradientAttack(train, FastHyper());
  EXPECT_GE(EvaluateMia(a, held), 0.95);
  size_t changed = 0;
  for (const auto& r : held) changed += a.PredictMember(r) != a.PredictMemberWithoutGradient(r);
  EXPECT_GT(changed, 0u);
  EXPECT_EQ(TrainGradientAttack(train, FastHyper()).digest(), a.digest());
}

class ConstantAttack : public MembershipAttack {
 public:
  explicit ConstantAttack(std::function<bool(const AttackRecord&)> f) : f_(std::move(f)) {}
  std::string family() const override { return "const"; }
  bool PredictMember(const AttackRecord& r) const override { return f_(r); }

 private:
  std::function<bool(const AttackRecord&)> f_;
};

TEST(EvaluateMia, PerfectCoinAndEmpty) {
  std::vector<AttackRecord> records;
  for (int i = 0; i < 2000; ++i) records.push_back(Synthetic(i % 2 == 0, 0.5));
  EXPECT_EQ(EvaluateMia(ConstantAttack([](const AttackRecord& r) { return r.member == 1; }),
                        records),
            1.0);
  std::mt19937_64 rng(12);
  std::vector<bool> coin(records.size());
  for (size_t i = 0; i < coin.size(); ++i) coin[i] = std::bernoulli_distribution(0.5)(rng);
  size_t k = 0;
  EXPECT_NEAR(EvaluateMia(ConstantAttack([&](const AttackRecord&) { return coin[k++]; }), records),
              0.5, 0.05);
  EXPECT_VPLEAK_ERROR(EvaluateMia(ConstantAttack([](const AttackRecord&) { return true; }), {}),
                      ErrorCode::kInput);
}

TEST(OverfittingLevel, IdenticalSetsGiveZero) {
  const Dataset d = Range(testing::ToyData(), 0, 30);
  const Prompt p = testing::RandomPrompt(ToySpec(), 4, 0.2);
  EXPECT_EQ(OverfittingLevel(ToyModel(), p, LabelMap{4}, d, d), 0.0);
  EXPECT_VPLEAK_ERROR(OverfittingLevel(ToyModel(), p, LabelMap{4}, d, Range(d, 0, 0)),
                      ErrorCode::kInput);
}

TEST(Pearson, ClosedForms) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> y(5), z(5);
  for (int i = 0; i < 5; ++i) y[i] = 2 * x[i] + 1, z[i] = -x[i];
  EXPECT_NEAR(Pearson(x, y), 1.0, 1e-12);
  EXPECT_NEAR(Pearson(x, z), -1.0, 1e-12);
  // Hand recomputation: sxy = 5.5, sxx = 5, syy = 8.75.
  const std::vector<double> a = {1, 2, 3, 4}, b = {1, 3, 2, 5};
  EXPECT_NEAR(Pearson(a, b), 5.5 / std::sqrt(5.0 * 8.75), 1e-12);
}

TEST(Pearson, Errors) {
  const std::vector<double> flat = {2, 2, 2}, x = {1, 2, 3};
  EXPECT_VPLEAK_ERROR(Pearson(flat, x), ErrorCode::kUndefined);
  EXPECT_VPLEAK_ERROR(Pearson(x, std::vector<double>{1, 2}), ErrorCode::kInput);
  EXPECT_VPLEAK_ERROR(Pearson(std::vector<double>{1}, std::vector<double>{1}), ErrorCode::kInput);
}

TEST(AttackFeatures, JsonLinesRoundTrip) {
  auto records = GradientToy(6, 9);
  records[1].sample_id = 42;
  records[2].true_class = 3;
  const auto dir = testing::TempDir("features");
  WriteAttackFeatures(dir / "f.jsonl", records);
  const auto back = ReadAttackFeatures(dir / "f.jsonl");
  ASSERT_EQ(back.size(), records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(back[i].variant, records[i].variant);
    EXPECT_EQ(back[i].sample_id, records[i].sample_id);
    EXPECT_EQ(back[i].true_class, records[i].true_class);
    EXPECT_EQ(back[i].member, records[i].member);
    EXPECT_EQ(back[i].top5, records[i].top5);
    EXPECT_EQ(back[i].loss, records[i].loss);
    EXPECT_EQ(back[i].gradient, records[i].gradient);
    EXPECT_TRUE((back[i].posterior.array() == records[i].posterior.array()).all());
  }
  WriteAttackFeatures(dir / "g.jsonl", records, /*include_gradient=*/false);
  for (const auto& r : ReadAttackFeatures(dir / "g.jsonl")) EXPECT_TRUE(r.gradient.empty());
}

}  // namespace
}  // namespace vpleak
