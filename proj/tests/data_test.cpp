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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include "gtest/gtest.h"
#include "reload/dataset.hpp"
#include "reload/training.hpp"

namespace reload {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TEST(SyntheticTest, ZeroNoiseBlobsAreSeparable) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 100, 2, 0.0, 3);
  // Two centers on a circle of radius 3 at angles 0 and pi: x = +3 and -3.
  double min0 = 1e9, max1 = -1e9;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const float x = d.inputs.row(i)[0];
    if (d.labels[i] == 0) min0 = std::min<double>(min0, x);
    if (d.labels[i] == 1) max1 = std::max<double>(max1, x);
  }
  EXPECT_GT(min0 - max1, 0.0);
}

TEST(SyntheticTest, SameSeedSameData) {
  for (auto kind : {SyntheticKind::kGaussianBlobs, SyntheticKind::kTwoMoons,
                    SyntheticKind::kRing}) {
    const std::size_t classes = kind == SyntheticKind::kTwoMoons ? 2 : 3;
    EXPECT_EQ(make_synthetic(kind, 50, classes, 0.2, 9),
              make_synthetic(kind, 50, classes, 0.2, 9));
    EXPECT_NE(make_synthetic(kind, 50, classes, 0.2, 9).inputs,
              make_synthetic(kind, 50, classes, 0.2, 10).inputs);
  }
}

TEST(SyntheticTest, ClassBalancedWithinOne) {
  const Dataset d = make_synthetic(SyntheticKind::kRing, 103, 4, 0.1, 1);
  std::vector<int> counts(4, 0);
  for (auto y : d.labels) ++counts[y];
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_LE(*hi - *lo, 1);
}

TEST(SyntheticTest, PreconditionsAreEnforced) {
  EXPECT_THROW(make_synthetic(SyntheticKind::kGaussianBlobs, 2, 3, 0.1, 1), Error);
  EXPECT_THROW(make_synthetic(SyntheticKind::kTwoMoons, 20, 3, 0.1, 1), Error);
  EXPECT_THROW(make_shapes(20, 7, 16, 1, 0.1, 1), Error);
}

TEST(SyntheticTest, TwoMoonsIsLearnable) {
  const Dataset d = make_synthetic(SyntheticKind::kTwoMoons, 1000, 2, 0.1, 4);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 64;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.seed = 4;
  const ModelState m = ModelState::build(
      ArchSpec::parse({2, 1, 1}, "dense:32,relu,dense:2"), 4);
  const TrainResult r = train(m, d, cfg);
  EXPECT_GE(r.history.back().accuracy, 95.0);
}

TEST(SyntheticTest, ShapesLeaveTriggerCornerToNoise) {
  const Dataset d = make_shapes(60, 6, 16, 2, 0.0, 5);
  ASSERT_EQ(d.inputs.shape(), (std::vector<std::size_t>{60, 2, 16, 16}));
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto row = d.inputs.row(i);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
          EXPECT_EQ(row[(ch * 16 + r) * 16 + c], 0.0f);
        }
      }
    }
  }
}

TEST(SplitTest, RandomSplitSizeAndPartition) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 100, 4, 1.0, 1);
  const SplitSpec a = split_random(d, 0.1, 1);
  const SplitSpec b = split_random(d, 0.1, 2);
  EXPECT_EQ(a.forget_indices.size(), 10u);
  EXPECT_EQ(b.forget_indices.size(), 10u);
  EXPECT_NE(a.forget_indices, b.forget_indices);
  const auto retain = a.retain_indices(d.size());
  std::set<std::size_t> all(retain.begin(), retain.end());
  for (std::size_t i : a.forget_indices) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 100u);
  EXPECT_TRUE(std::is_sorted(a.forget_indices.begin(), a.forget_indices.end()));
}

TEST(SplitTest, RandomSplitRejectsBadFraction) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 10, 2, 1.0, 1);
  EXPECT_THROW(split_random(d, 0.0, 1), Error);
  EXPECT_THROW(split_random(d, 1.0, 1), Error);
}

TEST(SplitTest, InClassSplit) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 2000, 4, 1.0, 1);
  const SplitSpec none = split_in_class(d, 2, 0, 1);
  EXPECT_TRUE(none.forget_indices.empty());
  EXPECT_EQ(none.retain_indices(d.size()).size(), d.size());

  const SplitSpec some = split_in_class(d, 2, 100, 1);
  ASSERT_EQ(some.forget_indices.size(), 100u);
  EXPECT_EQ(std::set<std::size_t>(some.forget_indices.begin(),
                                  some.forget_indices.end()).size(), 100u);
  for (std::size_t i : some.forget_indices) EXPECT_EQ(d.labels[i], 2);

  const SplitSpec whole = split_in_class(d, 2, 500, 1);
  EXPECT_EQ(whole.forget_indices.size(), 500u);
  EXPECT_THROW(split_in_class(d, 2, 501, 1), Error);
}

TEST(SplitTest, CorrectiveSplitsAreNestedInGamma) {
  std::vector<std::size_t> manipulated;
  for (std::size_t i = 0; i < 100; ++i) manipulated.push_back(3 * i + 1);
  std::vector<std::size_t> previous;
  for (int step = 1; step <= 10; ++step) {
    const double gamma = step / 10.0;
    const SplitSpec s = split_corrective(manipulated, gamma, 7);
    EXPECT_EQ(s.forget_indices.size(), static_cast<std::size_t>(step * 10));
    EXPECT_TRUE(std::includes(s.forget_indices.begin(), s.forget_indices.end(),
                              previous.begin(), previous.end()));
    EXPECT_TRUE(std::includes(manipulated.begin(), manipulated.end(),
                              s.forget_indices.begin(), s.forget_indices.end()));
    previous = s.forget_indices;
  }
  EXPECT_EQ(previous, manipulated);
}

CorruptionSpec label_spec(CorruptionKind kind, std::size_t count) {
  CorruptionSpec s;
  s.kind = kind;
  s.source_class = 1;
  s.target_class = 2;
  s.count = count;
  return s;
}

TEST(CorruptionTest, ZeroCountLeavesDataUnchanged) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 60, 3, 1.0, 1);
  const auto r = apply_corruption(d, label_spec(CorruptionKind::kLabelFlip, 0), 1);
  EXPECT_EQ(r.data, d);
  EXPECT_TRUE(r.manipulated.empty());
}

TEST(CorruptionTest, LabelFlipChangesExactlyCountLabels) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 60, 3, 1.0, 1);
  const auto r = apply_corruption(d, label_spec(CorruptionKind::kLabelFlip, 7), 1);
  std::vector<std::size_t> changed;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (r.data.labels[i] != d.labels[i]) {
      changed.push_back(i);
      EXPECT_EQ(d.labels[i], 1);
      EXPECT_EQ(r.data.labels[i], 2);
    }
  }
  EXPECT_EQ(changed, r.manipulated);
  EXPECT_EQ(changed.size(), 7u);
  EXPECT_EQ(r.data.inputs, d.inputs);
}

TEST(CorruptionTest, InterclassConfusionSwapsBothWays) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 60, 3, 1.0, 1);
  const auto r = apply_corruption(
      d, label_spec(CorruptionKind::kInterclassConfusion, 7), 1);
  int forward = 0, backward = 0;
  for (std::size_t i : r.manipulated) {
    if (d.labels[i] == 1 && r.data.labels[i] == 2) ++forward;
    if (d.labels[i] == 2 && r.data.labels[i] == 1) ++backward;
  }
  EXPECT_EQ(forward, 4);
  EXPECT_EQ(backward, 3);
  EXPECT_EQ(r.data.inputs, d.inputs);
}

TEST(CorruptionTest, LabelCorruptionRequiresDistinctClasses) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 60, 3, 1.0, 1);
  CorruptionSpec s = label_spec(CorruptionKind::kLabelFlip, 3);
  s.target_class = 1;
  EXPECT_THROW(apply_corruption(d, s, 1), Error);
  s = label_spec(CorruptionKind::kLabelFlip, 21);  // class 1 has 20 members
  EXPECT_THROW(apply_corruption(d, s, 1), Error);
}

TEST(CorruptionTest, BackdoorTouchesOnlyPatchCells) {
  const Dataset d = make_shapes(40, 4, 8, 1, 0.3, 2);
  CorruptionSpec s;
  s.kind = CorruptionKind::kBackdoorPoison;
  s.source_class = -1;
  s.target_class = 0;
  s.count = 10;
  s.patch = constant_patch(3, 1.0f);
  const auto r = apply_corruption(d, s, 3);
  ASSERT_EQ(r.manipulated.size(), 10u);
  const std::set<std::size_t> poisoned(r.manipulated.begin(), r.manipulated.end());
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto before = d.inputs.row(i);
    auto after = r.data.inputs.row(i);
    if (!poisoned.count(i)) {
      EXPECT_TRUE(std::equal(before.begin(), before.end(), after.begin()));
      EXPECT_EQ(r.data.labels[i], d.labels[i]);
      continue;
    }
    EXPECT_NE(d.labels[i], 0);
    EXPECT_EQ(r.data.labels[i], 0);
    for (std::size_t p = 0; p < 64; ++p) {
      const bool in_patch = p / 8 < 3 && p % 8 < 3;
      if (in_patch) {
        EXPECT_EQ(after[p], 1.0f);
      } else {
        EXPECT_EQ(after[p], before[p]);
      }
    }
  }
}

TEST(CorruptionTest, BackdoorPatchMustFit) {
  const Dataset d = make_shapes(40, 4, 8, 1, 0.3, 2);
  CorruptionSpec s;
  s.kind = CorruptionKind::kBackdoorPoison;
  s.target_class = 0;
  s.source_class = -1;
  s.count = 1;
  s.patch = constant_patch(3, 1.0f);
  s.patch_row = 6;
  EXPECT_THROW(apply_corruption(d, s, 1), Error);
  const Dataset tab = make_synthetic(SyntheticKind::kGaussianBlobs, 40, 2, 1.0, 1);
  s.patch_row = 0;
  EXPECT_THROW(apply_corruption(tab, s, 1), Error);
}

TEST(CorruptionTest, CovariateNoiseKeepsLabels) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 30, 3, 1.0, 1);
  CorruptionSpec s;
  s.kind = CorruptionKind::kCovariateNoise;
  s.count = 5;
  s.noise_std = 0.5;
  const auto r = apply_corruption(d, s, 4);
  EXPECT_EQ(r.data.labels, d.labels);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto a = d.inputs.row(i), b = r.data.inputs.row(i);
    changed += !std::equal(a.begin(), a.end(), b.begin());
  }
  EXPECT_EQ(changed, 5u);
}

TEST(ReplacementTest, EmptyIdentificationKeepsCorruptedData) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 60, 3, 1.0, 1);
  const auto r = apply_corruption(d, label_spec(CorruptionKind::kLabelFlip, 7), 1);
  const Dataset out = apply_replacement(r.data, r.manipulated, {},
                                        label_correction(d));
  EXPECT_EQ(out, r.data);
}

TEST(ReplacementTest, FullCorrectionRestoresCleanData) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 60, 3, 1.0, 1);
  for (auto kind : {CorruptionKind::kLabelFlip,
                    CorruptionKind::kInterclassConfusion,
                    CorruptionKind::kCovariateNoise}) {
    CorruptionSpec s = label_spec(kind, 7);
    const auto r = apply_corruption(d, s, 1);
    const Dataset out = apply_replacement(r.data, r.manipulated, r.manipulated,
                                          correction_for(kind, d));
    EXPECT_EQ(out, d) << to_string(kind);
  }
}

TEST(ReplacementTest, BackdoorRemovalOnTenOfHundred) {
  const Dataset d = make_shapes(300, 4, 8, 1, 0.3, 2);
  CorruptionSpec s;
  s.kind = CorruptionKind::kBackdoorPoison;
  s.source_class = -1;
  s.target_class = 0;
  s.count = 100;
  s.patch = constant_patch(3, 1.0f);
  const auto r = apply_corruption(d, s, 3);
  const SplitSpec split = split_corrective(r.manipulated, 0.1, 5);
  ASSERT_EQ(split.forget_indices.size(), 10u);
  const Dataset out = apply_replacement(r.data, r.manipulated,
                                        split.forget_indices,
                                        backdoor_removal(d));
  std::size_t restored = 0;
  for (std::size_t i : r.manipulated) {
    auto a = d.inputs.row(i), b = out.inputs.row(i);
    const bool same = std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
    restored += same && out.labels[i] == d.labels[i];
  }
  EXPECT_EQ(restored, 10u);
}

TEST(ReplacementTest, IdentifiedMustBeManipulated) {
  const Dataset d = make_synthetic(SyntheticKind::kGaussianBlobs, 60, 3, 1.0, 1);
  const auto r = apply_corruption(d, label_spec(CorruptionKind::kLabelFlip, 3), 1);
  std::size_t outsider = 0;
  while (std::binary_search(r.manipulated.begin(), r.manipulated.end(), outsider)) ++outsider;
  const std::vector<std::size_t> bad = {outsider};
  EXPECT_THROW(apply_replacement(r.data, r.manipulated, bad, label_correction(d)),
               Error);
}

TEST(DatasetIoTest, BinaryRoundTrip) {
  const Dataset d = make_shapes(12, 3, 8, 2, 0.3, 2);
  const std::string path = temp_path("reload_data_test.rldd");
  save_dataset(d, path);
  EXPECT_EQ(load_dataset(path), d);
  std::filesystem::remove(path);
  auto bytes = serialize_dataset(d);
  bytes.resize(bytes.size() - 1);
  EXPECT_THROW(deserialize_dataset(bytes), Error);
  bytes = serialize_dataset(d);
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_dataset(bytes), Error);
}

TEST(DatasetIoTest, CsvImport) {
  const std::string path = temp_path("reload_data_test.csv");
  {
    std::ofstream out(path);
    out << "x0,x1,label\n0.5,-1.25,1\n2,3,0\n-0.5,4e-1,2\n";
  }
  const Dataset d = load_csv(path);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.num_classes, 3u);
  EXPECT_EQ(d.labels, (std::vector<std::int32_t>{1, 0, 2}));
  EXPECT_EQ(d.inputs.storage(), (std::vector<float>{0.5f, -1.25f, 2, 3, -0.5f, 0.4f}));
  {
    std::ofstream out(path);
    out << "1,2,0\n1,2,3,1\n";
  }
  EXPECT_THROW(load_csv(path), Error);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace reload
