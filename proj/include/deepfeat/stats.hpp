// Copyright 2026 The DeepFeat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Summary statistics and paired two-tailed t-tests over per-image scores.

#pragma once

#include <span>
#include <string>

namespace deepfeat {

inline constexpr double kSignificanceLevel = 0.05;

struct Summary {
  double mean = 0.0;
  double sem = 0.0;  // sample std (n-1) / sqrt(n); 0 when n < 2
  std::size_t n = 0;
};

Summary summarize(std::span<const double> values);

struct PairwiseTest {
  std::string model_a;
  std::string model_b;
  std::string metric;
  double t = 0.0;
  double p = 1.0;
  bool significant = false;
  /// Differences were constant and nonzero: t is infinite and p is reported as 0.
  bool degenerate_variance = false;
};

/// Paired test on d = a - b with n - 1 degrees of freedom.
PairwiseTest paired_ttest(std::span<const double> a, std::span<const double> b);

}  // namespace deepfeat
