// Copyright 2026 The Reload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RELOAD_METRICS_HPP_
#define RELOAD_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reload/common.hpp"
#include "reload/dataset.hpp"
#include "reload/model.hpp"
#include "reload/network.hpp"
#include "reload/training.hpp"

namespace reload {

// Index of the largest entry; the lowest index wins ties.
inline std::size_t argmax(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

inline double accuracy_from_logits(const TensorBuffer& logits,
                                   std::span<const std::int32_t> labels) {
  if (labels.empty()) throw Error("accuracy of an empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<std::int32_t>(argmax(logits.row(i))) == labels[i]) ++hits;
  }
  return 100.0 * static_cast<double>(hits) /
         static_cast<double>(labels.size());
}

// Percent of samples whose argmax logit matches the label.
inline double accuracy(const ModelState& model, const Dataset& data) {
  if (data.empty()) throw Error("accuracy of an empty dataset");
  return accuracy_from_logits(dataset_logits(model, data), data.labels);
}

// Per-sample cross-entropy in double precision.
inline std::vector<double> sample_losses(const ModelState& model,
                                         const Dataset& data) {
  const TensorBuffer logits = dataset_logits(model, data);
  const std::size_t C = model.num_classes();
  std::vector<double> probs(C), out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::int32_t y = data.labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      throw Error("label " + std::to_string(y) + " outside [0, " +
                  std::to_string(C) + ")");
    }
    out[i] = detail::cross_entropy<float>(logits.row(i), y, probs);
  }
  return out;
}

// Mean cross-entropy; reported as the forget error.
inline double mean_loss(const ModelState& model, const Dataset& data) {
  if (data.empty()) throw Error("loss of an empty dataset");
  const auto losses = sample_losses(model, data);
  double s = 0;
  for (double l : losses) s += l;
  return s / static_cast<double>(losses.size());
}

inline double delta_metric(double unlearned, double retrained) {
  return std::abs(unlearned - retrained);
}

namespace detail {

inline void log_softmax(std::span<const float> z, std::span<double> out) {
  double m = -std::numeric_limits<double>::infinity();
  for (float v : z) m = std::max(m, static_cast<double>(v));
  double s = 0;
  for (float v : z) s += std::exp(static_cast<double>(v) - m);
  const double lse = m + std::log(s);
  for (std::size_t c = 0; c < z.size(); ++c) {
    out[c] = static_cast<double>(z[c]) - lse;
  }
}

}  // namespace detail

// KL(p||q) + KL(q||p) for p = softmax(a), q = softmax(b), written as
// sum (p - q)(log p - log q) so every term is non-negative.
inline double symmetric_kl(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error("symmetric_kl: logit vectors differ in size");
  }
  std::vector<double> la(a.size()), lb(b.size());
  detail::log_softmax(a, la);
  detail::log_softmax(b, lb);
  double s = 0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    s += (std::exp(la[c]) - std::exp(lb[c])) * (la[c] - lb[c]);
  }
  return std::max(0.0, s);
}

inline double symmetric_kl(const TensorBuffer& a, const TensorBuffer& b) {
  if (a.shape() != b.shape() || a.rank() != 2 || a.dim(0) == 0) {
    throw Error("symmetric_kl: logit tables differ in shape");
  }
  double s = 0;
  for (std::size_t i = 0; i < a.dim(0); ++i) s += symmetric_kl(a.row(i), b.row(i));
  return s / static_cast<double>(a.dim(0));
}

// Mean symmetric KL between the two models' predictive distributions.
inline double symmetric_kl(const ModelState& a, const ModelState& b,
                           const Dataset& data) {
  if (a.num_classes() != b.num_classes()) {
    throw Error("symmetric_kl: models have different output sizes");
  }
  if (data.empty()) throw Error("symmetric_kl of an empty dataset");
  return symmetric_kl(dataset_logits(a, data), dataset_logits(b, data));
}

// Loss-threshold membership attack: a sample is called a member when its
// loss is <= threshold. The threshold maximizes balanced accuracy on the
// labelled pools; ties go to the smallest threshold, so the fitted rule only
// depends on the ordering of losses.
struct ThresholdAttack {
  double threshold = -std::numeric_limits<double>::infinity();
  double balanced_accuracy = 0.5;
  bool informative = false;

  bool is_member(double loss) const { return loss <= threshold; }
};

inline ThresholdAttack fit_threshold_attack(std::span<const double> members,
                                            std::span<const double> nonmembers) {
  if (members.empty() || nonmembers.empty()) {
    throw Error("membership attack needs non-empty pools");
  }
  std::vector<double> m(members.begin(), members.end());
  std::vector<double> n(nonmembers.begin(), nonmembers.end());
  std::sort(m.begin(), m.end());
  std::sort(n.begin(), n.end());
  std::vector<double> candidates = m;
  candidates.insert(candidates.end(), n.begin(), n.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  ThresholdAttack best;  // threshold -inf: nobody is a member, 0.5
  for (double t : candidates) {
    const auto tp = std::upper_bound(m.begin(), m.end(), t) - m.begin();
    const auto fp = std::upper_bound(n.begin(), n.end(), t) - n.begin();
    const double tpr = static_cast<double>(tp) / static_cast<double>(m.size());
    const double tnr =
        1.0 - static_cast<double>(fp) / static_cast<double>(n.size());
    const double bacc = 0.5 * (tpr + tnr);
    if (bacc > best.balanced_accuracy) {
      best.threshold = t;
      best.balanced_accuracy = bacc;
    }
  }
  best.informative = best.balanced_accuracy > 0.5;
  return best;
}

struct MiaResult {
  double rate = 0.5;  // fraction of targets called members
  ThresholdAttack attack;
  std::optional<std::string> warning;
};

inline MiaResult mia_from_losses(std::span<const double> targets,
                                 std::span<const double> members,
                                 std::span<const double> nonmembers) {
  if (targets.empty()) throw Error("membership attack: no target samples");
  MiaResult r;
  r.attack = fit_threshold_attack(members, nonmembers);
  if (!r.attack.informative) {
    r.warning = "loss pools are indistinguishable; reporting 0.5";
    return r;
  }
  std::size_t hits = 0;
  for (double l : targets) hits += r.attack.is_member(l) ? 1 : 0;
  r.rate = static_cast<double>(hits) / static_cast<double>(targets.size());
  return r;
}

// Fits the attack on member (training) and non-member (held-out) pools
// under the given model and reports how much of the forget set it flags.
inline MiaResult mia_success(const ModelState& model, const Dataset& forget,
                             const Dataset& member_pool,
                             const Dataset& nonmember_pool) {
  if (member_pool.empty() || nonmember_pool.empty()) {
    throw Error("membership attack needs non-empty pools");
  }
  return mia_from_losses(sample_losses(model, forget),
                         sample_losses(model, member_pool),
                         sample_losses(model, nonmember_pool));
}

struct CorrectiveMetrics {
  double acc_corr = 0;
  double acc_retain = 0;
};

// acc_corr: accuracy on the manipulated inputs against clean labels.
// acc_retain: accuracy on held-out clean data.
inline CorrectiveMetrics corrective_metrics(const ModelState& model,
                                            const Dataset& manipulated_truth,
                                            const Dataset& retain_test) {
  return {accuracy(model, manipulated_truth), accuracy(model, retain_test)};
}

inline double cost_ratio(double method_seconds, double retrain_seconds) {
  if (!(retrain_seconds > 0)) throw Error("cost: retrain time must be > 0");
  if (!(method_seconds >= 0)) throw Error("cost: method time must be >= 0");
  return method_seconds / retrain_seconds;
}

}  // namespace reload

#endif  // RELOAD_METRICS_HPP_
