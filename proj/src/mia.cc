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

#include "vpleak/mia.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vpleak/error.h"
#include "vpleak/io.h"

namespace vpleak {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double Clamp(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

bool Decide(Direction direction, double score, double threshold) {
  return direction == Direction::kAtLeast ? score >= threshold : score <= threshold;
}

std::vector<size_t> Iota(size_t n) {
  std::vector<size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Stratified by membership label so both parts stay balanced.
void HoldoutSplit(std::span<const AttackRecord> records, double fraction,
                  uint64_t seed, std::vector<size_t>* train,
                  std::vector<size_t>* holdout) {
  std::mt19937_64 rng(seed);
  for (int label : {0, 1}) {
    std::vector<size_t> group;
    for (size_t i = 0; i < records.size(); ++i) {
      if (records[i].member == label) group.push_back(i);
    }
    std::shuffle(group.begin(), group.end(), rng);
    const auto cut = static_cast<size_t>(std::llround(fraction * group.size()));
    holdout->insert(holdout->end(), group.begin(), group.begin() + cut);
    train->insert(train->end(), group.begin() + cut, group.end());
  }
  std::sort(train->begin(), train->end());
  std::sort(holdout->begin(), holdout->end());
}

void RequireBothLabels(std::span<const AttackRecord> records) {
  bool seen[2] = {false, false};
  for (const AttackRecord& r : records) seen[r.member != 0] = true;
  Require(seen[0] && seen[1], ErrorCode::kTraining,
          "attack training data has a single membership label");
}

// Member losses crowd near zero; the log spreads them out.
double LogLoss(double loss) { return std::log(std::max(loss, 1e-12)); }

Vector Top5Input(const AttackRecord& r) {
  Vector v(5);
  for (int i = 0; i < 5; ++i) v[i] = r.top5[i];
  return v;
}

nn::Network BuildMlp(int in, int hidden, int out) {
  nn::Network net;
  net.Add(std::make_unique<nn::Dense>(in, hidden));
  net.Add(std::make_unique<nn::Relu>(hidden));
  net.Add(std::make_unique<nn::Dense>(hidden, out));
  return net;
}

nn::Network BuildEncoder(int in, int out) {
  nn::Network net;
  net.Add(std::make_unique<nn::Dense>(in, out));
  net.Add(std::make_unique<nn::Relu>(out));
  return net;
}

std::vector<AttackRecord> BuildRecords(const FrozenClassifier& model,
                                       const Prompt& prompt,
                                       const Dataset& members,
                                       const Dataset& nonmembers,
                                       const LabelMap& label_map,
                                       FeatureVariant variant) {
  std::set<int64_t> member_ids(members.ids.begin(), members.ids.end());
  for (int64_t id : nonmembers.ids) {
    Require(!member_ids.contains(id), ErrorCode::kInput,
            "sample " + std::to_string(id) +
                " appears in both the member and non-member sets");
  }
  CheckBorderSupport(prompt);
  const bool need_grad = variant == FeatureVariant::kGradient;
  const std::vector<int> border =
      need_grad ? BorderIndices(prompt.spec) : std::vector<int>{};
  const Vector values = prompt.AsVector();
  std::vector<AttackRecord> out;
  out.reserve(members.size() + nonmembers.size());
  for (const Dataset* set : {&members, &nonmembers}) {
    const std::vector<Vector> images = PrepareImages(*set, model.input_dims());
    for (size_t i = 0; i < set->size(); ++i) {
      PromptedPass pass = RunPromptedSample(model, images[i], values, prompt.spec,
                                            label_map, set->labels[i], need_grad);
      AttackRecord r;
      r.variant = variant;
      r.sample_id = set->ids[i];
      r.true_class = set->labels[i];
      r.member = set == &members ? 1 : 0;
      std::vector<double> sorted(pass.posterior.begin(), pass.posterior.end());
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      for (size_t k = 0; k < 5 && k < sorted.size(); ++k) r.top5[k] = sorted[k];
      r.loss = pass.loss;
      r.indicator = nn::Argmax(pass.posterior) == r.true_class ? 1 : 0;
      r.posterior = std::move(pass.posterior);
      if (need_grad) {
        r.gradient.reserve(border.size());
        for (int idx : border) r.gradient.push_back(pass.prompt_grad[idx]);
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

template <typename Predict>
double Accuracy(std::span<const AttackRecord> records,
                std::span<const size_t> indices, Predict predict) {
  size_t correct = 0;
  for (size_t i : indices) {
    if (predict(records[i]) == (records[i].member != 0)) ++correct;
  }
  return indices.empty() ? 0.0
                         : static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace

MiaSplits MakeSplits(std::span<const size_t> pool, const std::array<size_t, 4>& sizes,
                     uint64_t seed) {
  const size_t total = sizes[0] + sizes[1] + sizes[2] + sizes[3];
  Require(total <= pool.size(), ErrorCode::kInput,
          "splits need " + std::to_string(total) + " samples but the pool has " +
              std::to_string(pool.size()));
  std::vector<size_t> shuffled(pool.begin(), pool.end());
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  MiaSplits s;
  std::vector<size_t>* parts[4] = {&s.target_train, &s.target_test, &s.shadow_train,
                                   &s.shadow_test};
  size_t at = 0;
  for (int k = 0; k < 4; ++k) {
    parts[k]->assign(shuffled.begin() + at, shuffled.begin() + at + sizes[k]);
    at += sizes[k];
  }
  return s;
}

std::string_view MetricName(Metric metric) {
  switch (metric) {
    case Metric::kCorr: return "corr";
    case Metric::kConf: return "conf";
    case Metric::kEnt: return "ent";
    case Metric::kMent: return "ment";
  }
  return "?";
}

Metric ParseMetric(std::string_view name) {
  for (Metric m : kAllMetrics) {
    if (MetricName(m) == name) return m;
  }
  Fail(ErrorCode::kConfig, "unknown metric '" + std::string(name) + "'");
}

double MetricScore(Metric metric, const Vector& posterior, int true_label) {
  Require(true_label >= 0 && true_label < posterior.size(), ErrorCode::kInput,
          "true label " + std::to_string(true_label) + " outside the posterior");
  switch (metric) {
    case Metric::kCorr:
      return nn::Argmax(posterior) == true_label ? 1.0 : 0.0;
    case Metric::kConf:
      return posterior[true_label];
    case Metric::kEnt: {
      double s = 0.0;
      for (Eigen::Index i = 0; i < posterior.size(); ++i) {
        const double p = Clamp(posterior[i]);
        s -= p * std::log(p);
      }
      return s;
    }
    case Metric::kMent: {
      const double py = Clamp(posterior[true_label]);
      double s = -(1.0 - py) * std::log(py);
      for (Eigen::Index i = 0; i < posterior.size(); ++i) {
        if (i == true_label) continue;
        const double p = Clamp(posterior[i]);
        s -= p * std::log(1.0 - p);
      }
      return s;
    }
  }
  return 0.0;
}

Direction MetricDirection(Metric metric) {
  return metric == Metric::kEnt || metric == Metric::kMent ? Direction::kAtMost
                                                           : Direction::kAtLeast;
}

bool ThresholdTable::IsMember(double score, int true_class) const {
  auto it = per_class.find(true_class);
  const double tau = it != per_class.end() ? it->second : overall;
  return Decide(direction, score, tau);
}

ThresholdChoice BestThreshold(std::span<const ScoredSample> samples,
                              Direction direction) {
  Require(!samples.empty(), ErrorCode::kInput, "no samples to fit a threshold on");
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score < b.score; });
  const size_t n = sorted.size();
  size_t members = 0;
  for (const auto& s : sorted) members += s.member;
  const size_t nonmembers = n - members;

  // At tau = -inf: kAtLeast calls everything a member, kAtMost nothing.
  size_t correct = direction == Direction::kAtLeast ? members : nonmembers;
  ThresholdChoice best{-kInf, static_cast<double>(correct) / n};
  // Walk the distinct scores upward; after consuming a group, tau sits at
  // the midpoint to the next distinct score (or +inf after the last).
  size_t i = 0;
  while (i < n) {
    const double v = sorted[i].score;
    for (; i < n && sorted[i].score == v; ++i) {
      // The sample flips from "score >= tau" to "score < tau".
      const bool member = sorted[i].member;
      if (direction == Direction::kAtLeast) {
        correct += member ? -1 : 1;
      } else {
        correct += member ? 1 : -1;
      }
    }
    const double tau = i < n ? v + (sorted[i].score - v) / 2.0 : kInf;
    const double acc = static_cast<double>(correct) / n;
    if (acc > best.accuracy) best = {tau, acc};
  }
  return best;
}

ThresholdTable FitThresholds(std::span<const ScoredSample> shadow, Metric metric,
                             ThresholdMode mode) {
  ThresholdTable table;
  table.metric = metric;
  table.mode = mode;
  table.direction = MetricDirection(metric);
  if (metric == Metric::kCorr) {
    table.overall = 1.0;
    return table;
  }
  table.overall = BestThreshold(shadow, table.direction).threshold;
  if (mode == ThresholdMode::kOverall) return table;
  std::map<int, std::vector<ScoredSample>> by_class;
  for (const ScoredSample& s : shadow) by_class[s.true_class].push_back(s);
  for (const auto& [cls, group] : by_class) {
    const bool has_member = std::any_of(group.begin(), group.end(),
                                        [](const ScoredSample& s) { return s.member; });
    const bool has_nonmember = std::any_of(
        group.begin(), group.end(), [](const ScoredSample& s) { return !s.member; });
    if (has_member && has_nonmember) {
      table.per_class[cls] = BestThreshold(group, table.direction).threshold;
    }
  }
  return table;
}

std::string_view VariantName(FeatureVariant variant) {
  switch (variant) {
    case FeatureVariant::kTop5: return "top5";
    case FeatureVariant::kMetric: return "metric";
    case FeatureVariant::kGradient: return "gradient";
  }
  return "?";
}

std::vector<AttackRecord> NnAttackBuild(const FrozenClassifier& model,
                                        const Prompt& prompt, const Dataset& members,
                                        const Dataset& nonmembers,
                                        const LabelMap& label_map) {
  return BuildRecords(model, prompt, members, nonmembers, label_map,
                      FeatureVariant::kTop5);
}

std::vector<AttackRecord> GradientAttackBuild(const FrozenClassifier& model,
                                              const Prompt& prompt,
                                              const Dataset& members,
                                              const Dataset& nonmembers,
                                              const LabelMap& label_map) {
  return BuildRecords(model, prompt, members, nonmembers, label_map,
                      FeatureVariant::kGradient);
}

std::vector<ScoredSample> ScoreRecords(std::span<const AttackRecord> records,
                                       Metric metric) {
  std::vector<ScoredSample> out;
  out.reserve(records.size());
  for (const AttackRecord& r : records) {
    out.push_back({MetricScore(metric, r.posterior, r.true_class), r.true_class,
                   r.member != 0});
  }
  return out;
}

std::string MetricAttack::family() const {
  return "metric-" + std::string(MetricName(table_.metric));
}

bool MetricAttack::PredictMember(const AttackRecord& record) const {
  return table_.IsMember(MetricScore(table_.metric, record.posterior, record.true_class),
                         record.true_class);
}

NnAttack::NnAttack(nn::Network network, double learning_rate, double holdout_accuracy)
    : network_(std::move(network)),
      learning_rate_(learning_rate),
      holdout_accuracy_(holdout_accuracy) {}

bool NnAttack::PredictMember(const AttackRecord& record) const {
  return nn::Argmax(network_.Forward(Top5Input(record))) == 1;
}

NnAttack TrainNnAttack(std::span<const AttackRecord> records, const AttackHyper& hyper) {
  RequireBothLabels(records);
  Require(!hyper.learning_rates.empty(), ErrorCode::kConfig,
          "attack learning-rate grid is empty");
  std::vector<size_t> train, holdout;
  HoldoutSplit(records, hyper.holdout_fraction, hyper.seed, &train, &holdout);
  auto fit = [&](std::span<const size_t> indices, double lr) {
    std::vector<Vector> inputs;
    std::vector<int> labels;
    for (size_t i : indices) {
      inputs.push_back(Top5Input(records[i]));
      labels.push_back(records[i].member);
    }
    nn::Network net = BuildMlp(5, hyper.hidden, 2);
    net.Initialize(hyper.seed);
    nn::FitOptions opts;
    opts.epochs = hyper.epochs;
    opts.learning_rate = lr;
    opts.batch_size = hyper.batch_size;
    opts.seed = hyper.seed + 1;
    nn::FitClassifier(net, inputs, labels, opts);
    return net;
  };
  double best_lr = 0.0;
  double best_acc = -1.0;
  std::vector<double> grid = hyper.learning_rates;
  std::sort(grid.begin(), grid.end());
  for (double lr : grid) {
    nn::Network net = fit(train, lr);
    const double acc = Accuracy(records, holdout, [&](const AttackRecord& r) {
      return nn::Argmax(net.Forward(Top5Input(r))) == 1;
    });
    if (acc > best_acc) {
      best_acc = acc;
      best_lr = lr;
    }
  }
  // Final model: the selected rate on all records.
  return NnAttack(fit(Iota(records.size()), best_lr), best_lr, best_acc);
}

GradientAttackNet::GradientAttackNet(int gradient_size, const AttackHyper& hyper)
    : gradient_size_(gradient_size) {
  Require(gradient_size > 0, ErrorCode::kInput, "empty gradient features");
  encoders_[0] = BuildEncoder(gradient_size, hyper.gradient_width);
  encoders_[1] = BuildEncoder(5, hyper.top5_width);
  encoders_[2] = BuildEncoder(1, hyper.loss_width);
  encoders_[3] = BuildEncoder(1, hyper.indicator_width);
  const int joint = hyper.gradient_width + hyper.top5_width + hyper.loss_width +
                    hyper.indicator_width;
  head_ = BuildMlp(joint, hyper.hidden, 2);
}

void GradientAttackNet::Initialize(uint64_t seed) {
  for (size_t k = 0; k < encoders_.size(); ++k) encoders_[k].Initialize(seed + k);
  head_.Initialize(seed + encoders_.size());
}

void GradientAttackNet::FitScaling(std::span<const AttackRecord> records) {
  double sq = 0.0;
  double count = 0.0;
  double loss_sum = 0.0;
  for (const AttackRecord& r : records) {
    for (double g : r.gradient) sq += g * g;
    count += static_cast<double>(r.gradient.size());
    loss_sum += LogLoss(r.loss);
  }
  const double rms = count > 0 ? std::sqrt(sq / count) : 0.0;
  // Scaled to unit mean norm so 2k gradient inputs do not drown the rest.
  gradient_scale_ = rms > 0 ? 1.0 / (rms * std::sqrt(static_cast<double>(gradient_size_))) : 1.0;
  loss_mean_ = records.empty() ? 0.0 : loss_sum / records.size();
  double var = 0.0;
  for (const AttackRecord& r : records) {
    var += (LogLoss(r.loss) - loss_mean_) * (LogLoss(r.loss) - loss_mean_);
  }
  const double sd = records.empty() ? 0.0 : std::sqrt(var / records.size());
  loss_scale_ = sd > 0 ? 1.0 / sd : 1.0;
}

GradientAttackNet::Inputs GradientAttackNet::Encode(const AttackRecord& r,
                                                    bool zero_gradient) const {
  Require(static_cast<int>(r.gradient.size()) == gradient_size_, ErrorCode::kInput,
          "gradient feature has " + std::to_string(r.gradient.size()) +
              " entries, expected " + std::to_string(gradient_size_));
  Inputs in;
  in.gradient = Vector::Zero(gradient_size_);
  if (!zero_gradient) {
    for (int i = 0; i < gradient_size_; ++i) in.gradient[i] = r.gradient[i] * gradient_scale_;
  }
  in.top5 = Top5Input(r);
  in.loss = Vector::Constant(1, (LogLoss(r.loss) - loss_mean_) * loss_scale_);
  in.indicator = Vector::Constant(1, r.indicator);
  return in;
}

Vector GradientAttackNet::Forward(const AttackRecord& record, bool zero_gradient) const {
  const Inputs in = Encode(record, zero_gradient);
  const Vector* parts[4] = {&in.gradient, &in.top5, &in.loss, &in.indicator};
  Vector joint(head_.InputSize());
  Eigen::Index at = 0;
  for (size_t k = 0; k < 4; ++k) {
    const Vector z = encoders_[k].Forward(*parts[k]);
    joint.segment(at, z.size()) = z;
    at += z.size();
  }
  return head_.Forward(joint);
}

void GradientAttackNet::Train(std::span<const AttackRecord> records, double lr,
                              const AttackHyper& hyper) {
  std::vector<nn::Network*> nets = {&encoders_[0], &encoders_[1], &encoders_[2],
                                    &encoders_[3], &head_};
  std::vector<Matrix*> params;
  for (nn::Network* net : nets) {
    for (Matrix* p : net->MutableParams()) params.push_back(p);
  }
  nn::Adam adam(params);
  std::mt19937_64 rng(hyper.seed + 1);
  std::vector<size_t> order = Iota(records.size());
  std::vector<Inputs> encoded;
  encoded.reserve(records.size());
  for (const AttackRecord& r : records) encoded.push_back(Encode(r, false));
  std::array<nn::Tape, 4> enc_tapes;
  nn::Tape head_tape;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const size_t end = std::min(order.size(), start + hyper.batch_size);
      std::array<nn::Gradients, 5> grads;
      for (size_t k = 0; k < nets.size(); ++k) grads[k] = nets[k]->ZeroGradients();
      double loss = 0.0;
      for (size_t b = start; b < end; ++b) {
        const Inputs& in = encoded[order[b]];
        const Vector* parts[4] = {&in.gradient, &in.top5, &in.loss, &in.indicator};
        Vector joint(head_.InputSize());
        Eigen::Index at = 0;
        for (size_t k = 0; k < 4; ++k) {
          const Vector z = encoders_[k].Forward(*parts[k], &enc_tapes[k]);
          joint.segment(at, z.size()) = z;
          at += z.size();
        }
        const Vector logits = head_.Forward(joint, &head_tape);
        nn::LossAndGrad lg = nn::SoftmaxCrossEntropy(logits, records[order[b]].member);
        loss += lg.loss;
        const Vector djoint = head_.Backward(lg.grad, head_tape, &grads[4], true);
        at = 0;
        for (size_t k = 0; k < 4; ++k) {
          const Eigen::Index width = encoders_[k].OutputSize();
          encoders_[k].Backward(djoint.segment(at, width), enc_tapes[k], &grads[k], false);
          at += width;
        }
      }
      if (!std::isfinite(loss)) {
        Fail(ErrorCode::kTraining,
             "gradient attack diverged at epoch " + std::to_string(epoch));
      }
      nn::Gradients flat;
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) {
        for (Matrix& m : g) flat.push_back(m * scale);
      }
      adam.Step(params, flat, lr);
    }
  }
}

std::string GradientAttackNet::Digest() const {
  std::string all;
  for (const nn::Network& e : encoders_) all += nn::ParamDigest(e);
  all += nn::ParamDigest(head_);
  return Sha256Hex(std::span(reinterpret_cast<const uint8_t*>(all.data()), all.size()));
}

GradientAttack::GradientAttack(GradientAttackNet net, double learning_rate,
                               double holdout_accuracy)
    : net_(std::move(net)), learning_rate_(learning_rate), holdout_accuracy_(holdout_accuracy) {}

bool GradientAttack::PredictMember(const AttackRecord& record) const {
  return nn::Argmax(net_.Forward(record)) == 1;
}

bool GradientAttack::PredictMemberWithoutGradient(const AttackRecord& record) const {
  return nn::Argmax(net_.Forward(record, /*zero_gradient=*/true)) == 1;
}

GradientAttack TrainGradientAttack(std::span<const AttackRecord> records,
                                   const AttackHyper& hyper) {
  RequireBothLabels(records);
  Require(!hyper.learning_rates.empty(), ErrorCode::kConfig,
          "attack learning-rate grid is empty");
  const int g = static_cast<int>(records.front().gradient.size());
  std::vector<size_t> train, holdout;
  HoldoutSplit(records, hyper.holdout_fraction, hyper.seed, &train, &holdout);
  auto fit = [&](std::span<const size_t> indices, double lr) {
    std::vector<AttackRecord> subset;
    for (size_t i : indices) subset.push_back(records[i]);
    GradientAttackNet net(g, hyper);
    net.Initialize(hyper.seed);
    net.FitScaling(subset);
    net.Train(subset, lr, hyper);
    return net;
  };
  double best_lr = 0.0;
  double best_acc = -1.0;
  std::vector<double> grid = hyper.learning_rates;
  std::sort(grid.begin(), grid.end());
  for (double lr : grid) {
    GradientAttackNet net = fit(train, lr);
    const double acc = Accuracy(records, holdout, [&](const AttackRecord& r) {
      return nn::Argmax(net.Forward(r)) == 1;
    });
    if (acc > best_acc) {
      best_acc = acc;
      best_lr = lr;
    }
  }
  return GradientAttack(fit(Iota(records.size()), best_lr), best_lr, best_acc);
}

double EvaluateMia(const MembershipAttack& attack, std::span<const AttackRecord> records) {
  Require(!records.empty(), ErrorCode::kInput, "no attack records to evaluate");
  const std::vector<size_t> all = Iota(records.size());
  return Accuracy(records, all,
                  [&](const AttackRecord& r) { return attack.PredictMember(r); });
}

double OverfittingLevel(const FrozenClassifier& model, const Prompt& prompt,
                        const LabelMap& label_map, const Dataset& train_set,
                        const Dataset& test_set) {
  return EvaluatePrompt(model, prompt, label_map, train_set) -
         EvaluatePrompt(model, prompt, label_map, test_set);
}

double Pearson(std::span<const double> xs, std::span<const double> ys) {
  Require(xs.size() == ys.size() && xs.size() >= 2, ErrorCode::kInput,
          "pearson needs two equally long series of at least 2 points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  Require(sxx > 0 && syy > 0, ErrorCode::kUndefined,
          "pearson correlation is undefined for a constant series");
  return sxy / std::sqrt(sxx * syy);
}

void WriteAttackFeatures(const std::filesystem::path& path,
                         std::span<const AttackRecord> records, bool include_gradient) {
  std::ostringstream out;
  for (const AttackRecord& r : records) {
    nlohmann::json j = {{"variant", VariantName(r.variant)},
                        {"sample_id", r.sample_id},
                        {"true_class", r.true_class},
                        {"member", r.member},
                        {"top5", r.top5},
                        {"posterior", std::vector<double>(r.posterior.begin(),
                                                          r.posterior.end())},
                        {"loss", r.loss},
                        {"indicator", r.indicator}};
    if (include_gradient && r.variant == FeatureVariant::kGradient) {
      j["gradient"] = r.gradient;
    } else if (r.variant == FeatureVariant::kGradient) {
      j["variant"] = VariantName(FeatureVariant::kTop5);
    }
    out << j.dump() << "\n";
  }
  WriteTextFile(path, out.str());
}

std::vector<AttackRecord> ReadAttackFeatures(const std::filesystem::path& path) {
  std::istringstream in(ReadTextFile(path));
  std::vector<AttackRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      AttackRecord r;
      const std::string variant = j.at("variant");
      if (variant == "top5") {
        r.variant = FeatureVariant::kTop5;
      } else if (variant == "metric") {
        r.variant = FeatureVariant::kMetric;
      } else if (variant == "gradient") {
        r.variant = FeatureVariant::kGradient;
      } else {
        Fail(ErrorCode::kIo, "unknown feature variant '" + variant + "'");
      }
      r.sample_id = j.at("sample_id");
      r.true_class = j.at("true_class");
      r.member = j.at("member");
      r.top5 = j.at("top5");
      const std::vector<double> posterior = j.at("posterior");
      r.posterior = Eigen::Map<const Vector>(posterior.data(),
                                             static_cast<Eigen::Index>(posterior.size()));
      r.loss = j.at("loss");
      r.indicator = j.at("indicator");
      if (j.contains("gradient")) r.gradient = j.at("gradient").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kIo, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

MiaData MaterializeSplits(const Dataset& target_pool, const Dataset& shadow_pool,
                          const MiaSplits& splits) {
  return {Subset(target_pool, splits.target_train), Subset(target_pool, splits.target_test),
          Subset(shadow_pool, splits.shadow_train), Subset(shadow_pool, splits.shadow_test)};
}

std::map<std::string, double> EvaluateAttacks(std::span<const AttackRecord> shadow,
                                              std::span<const AttackRecord> target,
                                              const MiaRunConfig& config) {
  std::map<std::string, double> out;
  for (Metric m : config.metrics) {
    MetricAttack attack(FitThresholds(ScoreRecords(shadow, m), m, config.threshold_mode));
    out[attack.family()] = EvaluateMia(attack, target);
  }
  if (config.run_nn) {
    out["nn"] = EvaluateMia(TrainNnAttack(shadow, config.attack_hyper), target);
  }
  if (config.run_gradient) {
    out["gradient"] = EvaluateMia(TrainGradientAttack(shadow, config.attack_hyper), target);
  }
  return out;
}

std::vector<AttackRecord> BuildAttackRecords(const FrozenClassifier& model,
                                             const Prompt& prompt, const Dataset& members,
                                             const Dataset& nonmembers,
                                             const MiaRunConfig& config) {
  return config.run_gradient
             ? GradientAttackBuild(model, prompt, members, nonmembers, config.label_map)
             : NnAttackBuild(model, prompt, members, nonmembers, config.label_map);
}

MiaOutcome AttackPrompts(const FrozenClassifier& target_model,
                         const FrozenClassifier& shadow_model, const Prompt& target_prompt,
                         const Prompt& shadow_prompt, const MiaData& data,
                         const MiaRunConfig& config) {
  MiaOutcome out;
  out.utility = EvaluatePrompt(target_model, target_prompt, config.label_map, data.target_test);
  out.overfit_gap = EvaluatePrompt(target_model, target_prompt, config.label_map,
                                   data.target_train) -
                    out.utility;
  const std::vector<AttackRecord> shadow = BuildAttackRecords(
      shadow_model, shadow_prompt, data.shadow_train, data.shadow_test, config);
  const std::vector<AttackRecord> target = BuildAttackRecords(
      target_model, target_prompt, data.target_train, data.target_test, config);
  out.accuracy = EvaluateAttacks(shadow, target, config);
  return out;
}

MiaRun RunMia(const FrozenClassifier& target_model, const FrozenClassifier& shadow_model,
              const MiaData& data, const MiaRunConfig& config) {
  MiaRun run;
  run.target_prompt =
      TrainPrompt(target_model, data.target_train, config.spec, config.label_map,
                  config.target_hyper);
  run.shadow_prompt =
      TrainPrompt(shadow_model, data.shadow_train, config.spec, config.label_map,
                  config.shadow_hyper);
  run.outcome = AttackPrompts(target_model, shadow_model, run.target_prompt,
                              run.shadow_prompt, data, config);
  return run;
}

}  // namespace vpleak
