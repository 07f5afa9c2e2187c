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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include "gtest/gtest.h"
#include "reload/harness.hpp"
#include "reload/reload.hpp"
#include "support/oracles.hpp"

namespace reload {
namespace {

using ::reload::testing::brute_force_subset_gradient;
using ::reload::testing::random_dataset;

ModelState mlp(std::size_t in, std::size_t classes, std::uint64_t seed = 1) {
  return ModelState::build(
      ArchSpec::parse({in, 1, 1}, "dense:12,relu,dense:" + std::to_string(classes)),
      seed);
}

GradientVector vec(std::vector<float> v) {
  GradientVector g(v.size(), Reduction::kSum);
  std::copy(v.begin(), v.end(), g.values.values().begin());
  return g;
}

GradientSnapshot bound_snapshot(const ModelState& m, std::vector<float> v) {
  return {vec(std::move(v)), model_hash(m), Precision::kF32, "manual"};
}

TrainConfig small_train(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 16;
  c.learning_rate = 0.05;
  c.momentum = 0.9;
  c.seed = 5;
  return c;
}

// ---------------------------------------------------------------------------

TEST(ForgetGradientTest, RetainEqualsFullGivesZero) {
  const Dataset d = random_dataset(30, 4, 3, 1);
  const ModelState m = mlp(4, 3);
  const GradientSnapshot s = snapshot_full_gradient(m, d);
  const GradientVector f = forget_gradient(s, dataset_gradient(m, d));
  for (float v : f.values.values()) EXPECT_EQ(v, 0.0f);
}

TEST(ForgetGradientTest, EmptyRetainGivesSnapshot) {
  const Dataset d = random_dataset(30, 4, 3, 1);
  const ModelState m = mlp(4, 3);
  const GradientSnapshot s = snapshot_full_gradient(m, d);
  const GradientVector f =
      forget_gradient(s, dataset_gradient(m, d, std::vector<std::size_t>{}));
  EXPECT_EQ(f.values, s.grad.values);
}

TEST(ForgetGradientTest, MatchesDirectForgetGradient) {
  const Dataset d = random_dataset(64, 4, 3, 2);
  const ModelState m = mlp(4, 3, 3);
  const SplitSpec split = split_random(d, 0.2, 4);
  const GradientVector f = forget_gradient(
      snapshot_full_gradient(m, d),
      dataset_gradient(m, d, split.retain_indices(d.size())));
  const auto direct = brute_force_subset_gradient(m, d, split.forget_indices);
  for (std::size_t k = 0; k < direct.size(); ++k) {
    EXPECT_NEAR(f[k], direct[k], 1e-5);
  }
}

TEST(ForgetGradientTest, RejectsMismatch) {
  const ModelState m = mlp(2, 2);
  const GradientSnapshot s = bound_snapshot(m, std::vector<float>(m.num_params(), 1));
  EXPECT_THROW(forget_gradient(s, vec({1, 2})), Error);
  GradientVector mean(m.num_params(), Reduction::kMean);
  EXPECT_THROW(forget_gradient(s, mean), Error);
}

TEST(AscentTest, TwoParameterUpdate) {
  ModelState m = ModelState::build(ArchSpec::parse({1, 1, 1}, "dense:1"), 0);
  m.params()[0] = 0.25f;
  m.params()[1] = -1.0f;
  const GradientSnapshot s = bound_snapshot(m, {1.0f, -2.0f});
  const ModelState out = ascent_step(m, s, vec({0, 0}), 0.5);
  EXPECT_EQ(out.params()[0], 0.75f);
  EXPECT_EQ(out.params()[1], -2.0f);
  EXPECT_EQ(ascent_step(m, s, vec({0, 0}), 0.0).params(), m.params());
  EXPECT_EQ(ascent_step(m, s, vec({1.0f, -2.0f}), 0.5).params(), m.params());
}

TEST(AscentTest, RejectsForeignSnapshotAndOverflow) {
  ModelState m = ModelState::build(ArchSpec::parse({1, 1, 1}, "dense:1"), 0);
  GradientSnapshot s = bound_snapshot(m, {1.0f, 1.0f});
  ModelState other = m;
  other.params()[0] += 1.0f;
  EXPECT_THROW(ascent_step(other, s, vec({0, 0}), 0.1), Error);
  s.grad.values.values()[0] = 3e38f;
  EXPECT_THROW(ascent_step(m, s, vec({0, 0}), 10.0), Error);
}

TEST(AscentTest, BatchNormStatisticsUntouched) {
  const Dataset d = random_dataset(20, 4, 3, 2);
  ModelState m = ModelState::build(
      ArchSpec::parse({4, 1, 1}, "dense:6,bn,relu,dense:3"), 1);
  m = train(m, d, small_train(2)).model;
  const GradientSnapshot s = snapshot_full_gradient(m, d);
  const std::size_t half[] = {0, 1, 2, 3, 4};
  const ModelState out = ascent_step(m, s, dataset_gradient(m, d, half), 0.3);
  EXPECT_NE(out.params(), m.params());
  EXPECT_EQ(out.bn_stats()[1].mean, m.bn_stats()[1].mean);
  EXPECT_EQ(out.bn_stats()[1].var, m.bn_stats()[1].var);
}

// ---------------------------------------------------------------------------

TEST(KnowledgeValueTest, HandEvaluatedRatios) {
  const double eps = 1e-8;
  const KnowledgeValues kv =
      knowledge_values(vec({1.0f, 0.0f, 0.5f}), vec({0.9f, 0.0f, 0.5f}), eps,
                       Variant::kStandard);
  // |1.0 - 0.9| computed in double from the float inputs.
  const double d0 = std::abs(1.0 - static_cast<double>(0.9f));
  EXPECT_DOUBLE_EQ(kv.kv[0], (d0 + eps) / (1.0 + eps));
  EXPECT_NEAR(kv.kv[0], 0.1, 1e-7);
  EXPECT_DOUBLE_EQ(kv.kv[1], 1.0);
  EXPECT_DOUBLE_EQ(kv.kv[2], eps / (0.5 + eps));
}

TEST(KnowledgeValueTest, StrictlyPositive) {
  const Dataset d = random_dataset(40, 4, 3, 2);
  const ModelState m = mlp(4, 3);
  const std::size_t rows[] = {0, 3, 5, 8, 13, 21};
  for (Variant v : {Variant::kStandard, Variant::kNormalised, Variant::kCosineKv}) {
    const KnowledgeValues kv =
        knowledge_values(snapshot_full_gradient(m, d).grad,
                         dataset_gradient(m, d, complement(rows, d.size())),
                         1e-8, v, m.tensors());
    ASSERT_EQ(kv.kv.size(), m.num_params());
    for (double x : kv.kv) EXPECT_GT(x, 0.0);
  }
}

TEST(KnowledgeValueTest, NormalisedLeavesZeroVectorAlone) {
  const KnowledgeValues kv = knowledge_values(
      vec({3.0f, 4.0f}), vec({0.0f, 0.0f}), 1e-8, Variant::kNormalised);
  // Unit full gradient (0.6, 0.8), zero retain: ratio (|g|+e)/(|g|+e) = 1.
  EXPECT_DOUBLE_EQ(kv.kv[0], 1.0);
  EXPECT_DOUBLE_EQ(kv.kv[1], 1.0);
}

TEST(KnowledgeValueTest, CosineScorePerTensor) {
  const std::vector<ParamTensor> tensors = {
      {0, "a", 0, {2}}, {0, "b", 2, {2}}, {0, "c", 4, {1}}};
  // a: forget gradient equals the full gradient (cos 1).
  // b: forget gradient is the negated full gradient (cos -1).
  // c: zero full gradient.
  const KnowledgeValues kv = knowledge_values(
      vec({1, 2, 1, 1, 0}), vec({0, 0, 2, 2, 5}), 1e-8, Variant::kCosineKv,
      tensors);
  EXPECT_NEAR(kv.kv[0], 1e-8, 1e-12);
  EXPECT_EQ(kv.kv[0], kv.kv[1]);
  EXPECT_NEAR(kv.kv[2], 2.0, 1e-7);
  EXPECT_EQ(kv.kv[2], kv.kv[3]);
  EXPECT_NEAR(kv.kv[4], 1.0, 1e-7);
  EXPECT_THROW(knowledge_values(vec({1, 2}), vec({0, 0}), 1e-8,
                                Variant::kCosineKv, tensors),
               Error);
}

TEST(KnowledgeValueTest, EmptyForgetLeavesOnlySmoothingInNumerator) {
  const Dataset d = random_dataset(20, 4, 3, 2);
  const ModelState m = mlp(4, 3);
  const GradientSnapshot s = snapshot_full_gradient(m, d);
  const KnowledgeValues kv = knowledge_values(s, dataset_gradient(m, d), 1e-8,
                                              Variant::kStandard);
  for (std::size_t k = 0; k < kv.kv.size(); ++k) {
    EXPECT_NEAR(kv.kv[k] * (std::abs(static_cast<double>(s.grad[k])) + 1e-8),
                1e-8, 1e-20);
  }
}

TEST(KnowledgeValueTest, RejectsNonPositiveEpsilon) {
  EXPECT_THROW(knowledge_values(vec({1}), vec({1}), 0.0, Variant::kStandard),
               Error);
}

// ---------------------------------------------------------------------------

KnowledgeValues kv_of(std::vector<double> v) {
  KnowledgeValues kv;
  kv.kv = std::move(v);
  return kv;
}

ModelState ten_param_model() {
  // 3 inputs -> 2 classes dense layer: 6 weights + 2 biases; pad with a
  // second tiny layer to reach exactly 10 would complicate shapes, so use
  // input 4 -> 2 classes (8 weights + 2 biases).
  ModelState m = ModelState::build(ArchSpec::parse({4, 1, 1}, "dense:2"), 3);
  for (std::size_t k = 0; k < m.num_params(); ++k) {
    m.params()[k] = 0.5f + static_cast<float>(k);
  }
  return m;
}

TEST(SelectTest, ThresholdAtCeilRank) {
  const ModelState m = ten_param_model();
  ASSERT_EQ(m.num_params(), 10u);
  std::vector<double> v;
  for (int i = 1; i <= 10; ++i) v.push_back(i / 10.0);
  const ReinitResult r = select_and_reinit(m, kv_of(v), 0.3, ResetScheme::kZero, 1);
  EXPECT_DOUBLE_EQ(r.kv.threshold, 0.3);
  const std::vector<std::uint8_t> expect = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(r.kv.mask, expect);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_EQ(r.model.params()[k], k < 3 ? 0.0f : m.params()[k]);
  }
}

TEST(SelectTest, SmallAlphaStillResetsOne) {
  const ModelState m = ten_param_model();
  std::vector<double> v = {0.9, 0.2, 0.7, 0.4, 0.5, 0.6, 0.3, 0.8, 1.0, 0.05};
  const ReinitResult r = select_and_reinit(m, kv_of(v), 0.05, ResetScheme::kZero, 1);
  EXPECT_EQ(r.kv.selected(), 1u);
  EXPECT_EQ(r.kv.mask[9], 1);
}

TEST(SelectTest, TiesAreAllIncluded) {
  const ModelState m = ten_param_model();
  const ReinitResult all =
      select_and_reinit(m, kv_of(std::vector<double>(10, 0.7)), 0.2,
                        ResetScheme::kZero, 1);
  EXPECT_EQ(all.kv.selected(), 10u);
  std::vector<double> v = {0.1, 0.2, 0.2, 0.2, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  const ReinitResult some = select_and_reinit(m, kv_of(v), 0.2, ResetScheme::kZero, 1);
  EXPECT_EQ(some.kv.selected(), 4u);
}

TEST(SelectTest, MeanSchemeUsesTensorMeanBeforeReset) {
  const ModelState m = ten_param_model();  // weights 0.5..7.5, biases 8.5, 9.5
  std::vector<double> v(10, 1.0);
  v[0] = v[9] = 0.0;
  const ReinitResult r = select_and_reinit(m, kv_of(v), 0.2, ResetScheme::kMean, 1);
  EXPECT_FLOAT_EQ(r.model.params()[0], 4.0f);
  EXPECT_FLOAT_EQ(r.model.params()[9], 9.0f);
  for (std::size_t k = 1; k < 9; ++k) EXPECT_EQ(r.model.params()[k], m.params()[k]);
}

TEST(SelectTest, StochasticResetIsSeeded) {
  const ModelState m = mlp(4, 3);
  std::vector<double> v(m.num_params());
  Rng rng = make_rng(4);
  for (double& x : v) x = uniform01(rng);
  const auto a = select_and_reinit(m, kv_of(v), 0.25, ResetScheme::kXavierNormal, 8);
  const auto b = select_and_reinit(m, kv_of(v), 0.25, ResetScheme::kXavierNormal, 8);
  const auto c = select_and_reinit(m, kv_of(v), 0.25, ResetScheme::kXavierNormal, 9);
  EXPECT_EQ(a.model.params(), b.model.params());
  EXPECT_NE(a.model.params(), c.model.params());
}

TEST(SelectTest, RejectsBadInputs) {
  const ModelState m = ten_param_model();
  EXPECT_THROW(select_and_reinit(m, kv_of({1, 2}), 0.3, ResetScheme::kZero, 1), Error);
  EXPECT_THROW(select_and_reinit(m, kv_of(std::vector<double>(10, 1)), 1.0,
                                 ResetScheme::kZero, 1),
               Error);
}

TEST(SelectTest, MaskInvariantUnderCommonScaling) {
  const Dataset d = random_dataset(50, 4, 3, 6);
  const ModelState m = mlp(4, 3, 6);
  const std::size_t rows[] = {1, 4, 9, 16, 25, 36};
  const GradientVector full = snapshot_full_gradient(m, d).grad;
  const GradientVector retain = dataset_gradient(m, d, complement(rows, d.size()));
  const double c = 64.0;  // a power of two keeps the float scaling exact
  GradientVector full_c = full, retain_c = retain;
  for (float& v : full_c.values.values()) v *= static_cast<float>(c);
  for (float& v : retain_c.values.values()) v *= static_cast<float>(c);
  const auto a = select_and_reinit(
      m, knowledge_values(full, retain, 1e-8, Variant::kStandard), 0.2,
      ResetScheme::kZero, 1);
  const auto b = select_and_reinit(
      m, knowledge_values(full_c, retain_c, 1e-8 * c, Variant::kStandard), 0.2,
      ResetScheme::kZero, 1);
  EXPECT_EQ(a.kv.mask, b.kv.mask);
}

// ---------------------------------------------------------------------------

TEST(FinetuneTest, ZeroEpochsKeepsModel) {
  const Dataset d = random_dataset(20, 4, 3, 2);
  const ModelState m = mlp(4, 3);
  EXPECT_EQ(finetune(m, d, small_train(0), 1.0, 1).model.params(), m.params());
  EXPECT_EQ(finetune(m, d, small_train(0), 0.5, 1).model.params(), m.params());
}

TEST(FinetuneTest, SubsetIsSeedDeterministic) {
  const Dataset d = random_dataset(40, 4, 3, 2);
  const ModelState m = mlp(4, 3);
  const auto a = finetune(m, d, small_train(2), 0.5, 7).model;
  const auto b = finetune(m, d, small_train(2), 0.5, 7).model;
  const auto c = finetune(m, d, small_train(2), 0.5, 8).model;
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), c.params());
  EXPECT_THROW(finetune(m, d, small_train(1), 0.0, 1), Error);
  EXPECT_THROW(finetune(m, d.subset(std::vector<std::size_t>{}), small_train(1), 1.0, 1),
               Error);
}

TEST(FinetuneTest, FullRetainAtLeastAsAccurateAsHalf) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 200, 4, 1.2, 3, 6);
  const ModelState fresh = mlp(6, 4, 9);
  const ModelState full = finetune(fresh, d, small_train(15), 1.0, 2).model;
  const ModelState half = finetune(fresh, d, small_train(15), 0.5, 2).model;
  const auto acc = [&](const ModelState& m) {
    const TensorBuffer logits = dataset_logits(m, d);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto row = logits.row(i);
      hit += static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) -
                                       row.begin()) == d.labels[i];
    }
    return hit;
  };
  EXPECT_GE(acc(full), acc(half));
}

TEST(FinetuneTest, ConvergenceStopsEarly) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 80, 2, 0.1, 3);
  TrainConfig c = small_train(400);
  c.early_stop = EarlyStopping{};
  const TrainResult r = finetune(mlp(2, 2), d, c, 1.0, 1);
  EXPECT_LT(r.history.size(), 400u);
}

// ---------------------------------------------------------------------------

struct PipelineFixture {
  Dataset data = make_synthetic(SyntheticKind::kGaussianBlobs, 120, 3, 0.8, 11, 4);
  SplitSpec split = split_random(data, 0.1, 2);
  Dataset retain = data.subset(split.retain_indices(data.size()));
  ModelState model = train(mlp(4, 3, 2), data, small_train(10)).model;
  GradientSnapshot snapshot = snapshot_full_gradient(model, data);

  ReloadConfig config() const {
    ReloadConfig c;
    c.alpha = 0.2;
    c.eta_p = 0.05;
    c.finetune = small_train(3);
    c.seed = 4;
    return c;
  }
};

TEST(PipelineTest, StagesRunInOrder) {
  PipelineFixture f;
  const ReloadResult r = run_reload(f.model, f.snapshot, f.retain, f.config());
  const StageTimings& t = r.timings;
  EXPECT_GE(t.ascent_start, t.retain_gradient);
  EXPECT_GE(t.knowledge_values_start, t.ascent_start + t.ascent);
  EXPECT_GE(t.reinit_start, t.knowledge_values_start + t.knowledge_values);
  EXPECT_GE(t.finetune_start, t.reinit_start + t.reinit);
  EXPECT_GE(t.total, t.finetune_start + t.finetune - 1e-12);
  EXPECT_EQ(r.finetune_history.size(), 3u);
  EXPECT_GE(r.kv.selected(), ceil_fraction(0.2, f.model.num_params()));
}

TEST(PipelineTest, NoAscentIgnoresStepSize) {
  PipelineFixture f;
  ReloadConfig a = f.config(), b = f.config();
  a.variant = b.variant = Variant::kNoAscent;
  a.eta_p = 0.01;
  b.eta_p = 50.0;
  EXPECT_EQ(run_reload(f.model, f.snapshot, f.retain, a).model.params(),
            run_reload(f.model, f.snapshot, f.retain, b).model.params());
  ReloadConfig c = f.config();
  c.eta_p = 50.0;
  EXPECT_NE(run_reload(f.model, f.snapshot, f.retain, c).model.params(),
            run_reload(f.model, f.snapshot, f.retain, a).model.params());
}

TEST(PipelineTest, KnowledgeValuesUseCachedQuantitiesByDefault) {
  PipelineFixture f;
  ReloadConfig c = f.config();
  const ReloadResult r = run_reload(f.model, f.snapshot, f.retain, c);
  const KnowledgeValues direct =
      knowledge_values(f.snapshot, dataset_gradient(f.model, f.retain), c.epsilon,
                       c.variant);
  EXPECT_EQ(r.kv.kv, direct.kv);
  c.kv_at_theta_prime = true;
  c.eta_p = 1.0;
  EXPECT_NE(run_reload(f.model, f.snapshot, f.retain, c).kv.kv, direct.kv);
}

TEST(PipelineTest, Deterministic) {
  PipelineFixture f;
  EXPECT_EQ(run_reload(f.model, f.snapshot, f.retain, f.config()).model.params(),
            run_reload(f.model, f.snapshot, f.retain, f.config()).model.params());
}

TEST(PipelineTest, ReinitDisabledLeavesMaskEmpty) {
  PipelineFixture f;
  ReloadConfig c = f.config();
  c.reinit_enabled = false;
  EXPECT_EQ(run_reload(f.model, f.snapshot, f.retain, c).kv.selected(), 0u);
}

TEST(PipelineTest, ErrorsNameTheStage) {
  PipelineFixture f;
  ModelState other = f.model;
  other.params()[0] += 1.0f;
  try {
    run_reload(other, f.snapshot, f.retain, f.config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("validate"), std::string::npos);
  }
  ReloadConfig c = f.config();
  c.eta_p = 1e300;
  try {
    run_reload(f.model, f.snapshot, f.retain, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("ascent"), std::string::npos) << e.what();
  }
  c = f.config();
  c.alpha = 1.5;
  EXPECT_THROW(run_reload(f.model, f.snapshot, f.retain, c), Error);
}

// The pipeline entry point takes exactly one dataset, the retain set.
template <typename T>
struct Signature;
template <typename R, typename... A>
struct Signature<R (*)(A...)> {
  static constexpr std::size_t datasets =
      (0 + ... + std::is_same_v<std::remove_cvref_t<A>, Dataset>);
  static constexpr std::size_t arity = sizeof...(A);
};

TEST(BlindnessTest, PipelineInterfaceHasNoForgetInput) {
  using Sig = Signature<decltype(&run_reload)>;
  static_assert(Sig::arity == 4);
  static_assert(Sig::datasets == 1);
  static_assert(std::is_invocable_r_v<ReloadResult, decltype(&run_reload),
                                      const ModelState&, const GradientSnapshot&,
                                      const Dataset&, const ReloadConfig&>);
  SUCCEED();
}

TEST(BlindnessTest, BlindMethodsCannotReadForgetSamples) {
  PipelineFixture f;
  const Dataset forget = f.data.subset(f.split.forget_indices);
  for (Method m : kAllMethods) {
    const UnlearnInputs in = make_inputs(m, f.model, f.snapshot, f.retain, forget);
    EXPECT_EQ(in.retain.get().size(), f.retain.size());
    if (is_partially_blind(m)) {
      EXPECT_FALSE(in.forget.available());
      EXPECT_THROW(in.forget.get(), AccessError) << to_string(m);
    } else {
      EXPECT_EQ(in.forget.get().size(), forget.size());
    }
  }
}

}  // namespace
}  // namespace reload
