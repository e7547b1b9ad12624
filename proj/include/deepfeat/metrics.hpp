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

// Fixation-prediction scores: ROC/AUC against the fixation density, ROC/AUC
// with uniformly sampled negatives (Borji), Pearson CC and KL divergence.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepfeat/imaging.hpp"

namespace deepfeat {

struct FixationGroundTruth {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> points;  // 1 where at least one fixation landed
  Map2D density;                     // probability state

  std::size_t fixation_count() const;
  void validate() const;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Points ordered along a descending threshold sweep, from (0,0) to (1,1).
struct RocCurve {
  std::vector<RocPoint> points;
};

struct MetricConfig {
  double epsilon = 2.220446049250313e-16;
  int borji_splits = 100;
  int borji_sample_size = 0;  // 0: number of fixation points
  std::uint64_t rng_seed = 42;

  void validate() const;
};

/// Thresholds at every distinct saliency value. TPR is the fixation-density mass
/// at or above the threshold, FPR the fraction of all pixels at or above it.
RocCurve roc_dist(const Map2D& sal, const FixationGroundTruth& gt);

/// ROC of positive versus negative samples with thresholds at every distinct
/// sampled value. Its trapezoidal area equals P(pos > neg) + P(pos == neg) / 2.
RocCurve roc_from_samples(std::span<const double> positives, std::span<const double> negatives);

/// Saliency values at the fixated pixels.
std::vector<double> fixation_values(const Map2D& sal, const FixationGroundTruth& gt);

/// One negative sample set per split: uniform pixel draws with replacement from a
/// generator seeded with cfg.rng_seed.
std::vector<std::vector<double>> borji_negative_samples(const Map2D& sal, const FixationGroundTruth& gt,
                                                        const MetricConfig& cfg);

/// Mean over splits of the per-split curves, evaluated at the union of all
/// thresholds. Its area equals the mean of the per-split areas.
RocCurve roc_borji(const Map2D& sal, const FixationGroundTruth& gt, const MetricConfig& cfg);

/// Trapezoidal area under the curve.
double auc(const RocCurve& curve);

/// Pearson correlation with population moments. Throws DataError on zero variance.
double cc(const Map2D& sal, const Map2D& gt_density);

/// sum F log(eps + F / (eps + S)), natural log.
double kl(const Map2D& sal, const Map2D& gt_density, double epsilon = MetricConfig{}.epsilon);

/// Curve sampled on an evenly spaced FPR grid (upper envelope at vertical steps).
std::vector<double> tpr_on_grid(const RocCurve& curve, int grid_points);

}  // namespace deepfeat
