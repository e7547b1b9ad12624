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

#include "deepfeat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "deepfeat/error.hpp"

namespace deepfeat {

std::size_t FixationGroundTruth::fixation_count() const {
  return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](std::uint8_t p) { return p != 0; }));
}

void FixationGroundTruth::validate() const {
  if (height < 1 || width < 1) throw DataError("ground truth has no pixels");
  if (points.size() != static_cast<std::size_t>(height) * width) throw DataError("fixation point map size mismatch");
  if (density.height() != height || density.width() != width) throw DataError("fixation density size mismatch");
  if (!satisfies_state(density.values(), MapState::probability)) {
    throw DataError("fixation density is not a probability map");
  }
}

void MetricConfig::validate() const {
  if (!(epsilon > 0.0)) throw UsageError("epsilon must be positive");
  if (borji_splits < 1) throw UsageError("borji_splits must be >= 1");
  if (borji_sample_size < 0) throw UsageError("borji_sample_size must be >= 0");
}

namespace {

void require_finite(const Map2D& m, const char* what) {
  for (double v : m.values()) {
    if (!std::isfinite(v)) throw DataError(std::string(what) + ": non-finite value");
  }
}

void require_same_shape(const Map2D& a, const Map2D& b, const char* what) {
  if (!a.same_shape(b)) throw UsageError(std::string(what) + ": dimension mismatch");
}

}  // namespace

RocCurve roc_dist(const Map2D& sal, const FixationGroundTruth& gt) {
  require_same_shape(sal, gt.density, "roc_dist");
  require_finite(sal, "roc_dist");
  require_finite(gt.density, "roc_dist");
  const std::size_t n = sal.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sal[a] > sal[b]; });
  double total_mass = 0.0;
  for (double f : gt.density.values()) total_mass += f;
  if (!(total_mass > 0.0)) throw DataError("roc_dist: fixation density has no mass");

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  double mass = 0.0;
  std::size_t i = 0;
  while (i < n) {
    const double t = sal[order[i]];
    while (i < n && sal[order[i]] == t) mass += gt.density[order[i++]];
    curve.points.push_back({static_cast<double>(i) / n, std::min(1.0, mass / total_mass)});
  }
  curve.points.back() = {1.0, 1.0};
  return curve;
}

RocCurve roc_from_samples(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw UsageError("roc_from_samples: empty sample set");
  std::vector<double> pos(positives.begin(), positives.end()), neg(negatives.begin(), negatives.end());
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t ip = 0, in = 0;
  while (ip < pos.size() || in < neg.size()) {
    double t;
    if (ip == pos.size()) t = neg[in];
    else if (in == neg.size()) t = pos[ip];
    else t = std::max(pos[ip], neg[in]);
    while (ip < pos.size() && pos[ip] >= t) ++ip;
    while (in < neg.size() && neg[in] >= t) ++in;
    curve.points.push_back({in / nn, ip / np});
  }
  return curve;
}

std::vector<double> fixation_values(const Map2D& sal, const FixationGroundTruth& gt) {
  if (sal.height() != gt.height || sal.width() != gt.width) throw UsageError("fixation_values: dimension mismatch");
  std::vector<double> out;
  for (std::size_t i = 0; i < gt.points.size(); ++i) {
    if (gt.points[i]) out.push_back(sal[i]);
  }
  return out;
}

std::vector<std::vector<double>> borji_negative_samples(const Map2D& sal, const FixationGroundTruth& gt,
                                                        const MetricConfig& cfg) {
  cfg.validate();
  if (sal.height() != gt.height || sal.width() != gt.width) throw UsageError("roc_borji: dimension mismatch");
  const std::size_t fixations = gt.fixation_count();
  if (fixations == 0) throw DataError("roc_borji: no fixation points");
  const std::size_t sample = cfg.borji_sample_size > 0 ? static_cast<std::size_t>(cfg.borji_sample_size) : fixations;
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, sal.size() - 1);
  std::vector<std::vector<double>> splits(cfg.borji_splits);
  for (auto& neg : splits) {
    neg.resize(sample);
    for (double& v : neg) v = sal[pick(rng)];
  }
  return splits;
}

RocCurve roc_borji(const Map2D& sal, const FixationGroundTruth& gt, const MetricConfig& cfg) {
  require_finite(sal, "roc_borji");
  auto pos = fixation_values(sal, gt);
  if (pos.empty()) throw DataError("roc_borji: no fixation points");
  auto splits = borji_negative_samples(sal, gt, cfg);

  std::vector<double> thresholds(pos);
  for (const auto& neg : splits) thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  auto counts_at = [&](std::vector<double>& values, std::vector<double>& into) {
    std::sort(values.begin(), values.end(), std::greater<>());
    std::size_t j = 0;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      while (j < values.size() && values[j] >= thresholds[t]) ++j;
      into[t] += static_cast<double>(j) / values.size();
    }
  };
  std::vector<double> tpr(thresholds.size(), 0.0), fpr(thresholds.size(), 0.0);
  counts_at(pos, tpr);
  for (auto& neg : splits) counts_at(neg, fpr);

  RocCurve curve;
  curve.points.reserve(thresholds.size() + 1);
  curve.points.push_back({0.0, 0.0});
  for (std::size_t t = 0; t < thresholds.size(); ++t) curve.points.push_back({fpr[t] / splits.size(), tpr[t]});
  curve.points.back() = {1.0, 1.0};
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return std::clamp(area, 0.0, 1.0);
}

double cc(const Map2D& sal, const Map2D& gt_density) {
  require_same_shape(sal, gt_density, "cc");
  require_finite(sal, "cc");
  require_finite(gt_density, "cc");
  const std::size_t n = sal.size();
  if (n == 0) throw UsageError("cc: empty maps");
  double ms = 0.0, mf = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ms += sal[i];
    mf += gt_density[i];
  }
  ms /= n;
  mf /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ds = sal[i] - ms, df = gt_density[i] - mf;
    sxy += ds * df;
    sxx += ds * ds;
    syy += df * df;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("undefined correlation: zero-variance map");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double kl(const Map2D& sal, const Map2D& gt_density, double epsilon) {
  require_same_shape(sal, gt_density, "kl");
  if (!(epsilon > 0.0)) throw UsageError("kl: epsilon must be positive");
  if (!satisfies_state(sal.values(), MapState::probability) ||
      !satisfies_state(gt_density.values(), MapState::probability)) {
    throw UsageError("kl: both maps must be probability distributions");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < sal.size(); ++i) {
    const double f = gt_density[i];
    if (f == 0.0) continue;
    total += f * std::log(epsilon + f / (epsilon + sal[i]));
  }
  return total;
}

std::vector<double> tpr_on_grid(const RocCurve& curve, int grid_points) {
  if (grid_points < 2) throw UsageError("tpr_on_grid: need at least two grid points");
  const auto& p = curve.points;
  if (p.empty()) throw UsageError("tpr_on_grid: empty curve");
  std::vector<double> out(grid_points, 0.0);
  for (int g = 0; g < grid_points; ++g) {
    const double x = static_cast<double>(g) / (grid_points - 1);
    // first point strictly right of x; fpr is non-decreasing along the curve
    const auto j = static_cast<std::size_t>(
        std::upper_bound(p.begin(), p.end(), x, [](double v, const RocPoint& q) { return v < q.fpr; }) - p.begin());
    if (j == 0) {
      out[g] = 0.0;
    } else if (j == p.size() || p[j - 1].fpr == x) {
      out[g] = p[j - 1].tpr;  // top of a vertical step
    } else {
      const auto& a = p[j - 1];
      const auto& b = p[j];
      out[g] = a.tpr + (x - a.fpr) / (b.fpr - a.fpr) * (b.tpr - a.tpr);
    }
  }
  return out;
}

}  // namespace deepfeat
