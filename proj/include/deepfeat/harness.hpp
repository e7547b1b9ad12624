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


// Dataset ingestion, batch evaluation of the model variants and of external
// saliency maps, aggregation, paired tests and CSV report emission.
//
// Dataset layout:
//   <root>/images/<id>.(jpeg|jpg|png)
//   <root>/fixations/points/<id>.csv   header "x,y", integer pixel coordinates
//   <root>/fixations/maps/<id>.png     8-bit grayscale density

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deepfeat/backbone.hpp"
#include "deepfeat/fusion.hpp"
#include "deepfeat/metrics.hpp"
#include "deepfeat/stats.hpp"

namespace deepfeat {

// --- dataset ---

struct DatasetEntry {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path points;
  std::filesystem::path density;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;  // sorted by id
};

struct DatasetOptions {
  /// > 0: rebuild the density from the fixation points with this Gaussian sigma
  /// (pixels) instead of reading the provided map.
  double regen_density_sigma = 0.0;
  /// Decode every image and density at load time to validate them.
  bool validate = true;
};

DatasetIndex load_dataset(const std::filesystem::path& root, const DatasetOptions& options = {});

/// (x, y) pairs; throws DataError naming the file and row for malformed or
/// out-of-bounds rows.
std::vector<std::pair<int, int>> read_fixation_points(const std::filesystem::path& path, int height, int width);

FixationGroundTruth load_ground_truth(const DatasetEntry& entry, int height, int width,
                                      const DatasetOptions& options = {});

// --- evaluation ---

enum class Metric { auc, auc_borji, cc, kl };
inline constexpr std::array<Metric, 4> kAllMetrics{Metric::auc, Metric::auc_borji, Metric::cc, Metric::kl};

std::string metric_name(Metric m);  // "AUC", "AUC_Borji", "CC", "KL"
bool higher_is_better(Metric m);

struct ImageScores {
  std::string image_id;
  std::array<double, 4> values{};  // indexed like kAllMetrics
};

struct ConfigEcho {
  double alpha = 0.5;
  double beta = 0.5;
  double sigma_frac = 0.25;
  std::uint64_t seed = 42;
  double epsilon = MetricConfig{}.epsilon;
  int borji_splits = 100;
};

struct MetricReport {
  std::string model;
  std::vector<ImageScores> rows;  // id order
  std::array<Summary, 4> aggregates{};
  std::vector<double> roc_tpr;        // mean ROC (fixation density) on an even FPR grid
  std::vector<double> roc_borji_tpr;  // mean ROC (Borji) on the same grid
  ConfigEcho config;

  std::vector<double> column(Metric m) const;
};

struct EvaluationConfig {
  FusionConfig fusion;
  MetricConfig metric;
  DatasetOptions dataset;
  std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
  int workers = 1;
  bool all_pairs = false;
  std::filesystem::path dump_dir;  // empty: no per-image map dumps
  double max_skip_fraction = 0.10;
  int roc_grid_points = 101;

  void validate() const;
  ConfigEcho echo() const;
};

struct EvaluationResult {
  std::vector<MetricReport> reports;
  std::vector<PairwiseTest> tests;
  std::vector<std::string> skipped;  // image ids excluded from every report
};

/// Creates one feature source per worker thread.
using SourceFactory = std::function<std::unique_ptr<FeatureSource>()>;

/// Scores are rounded to the precision written to scores.csv before they are
/// aggregated or tested, so the report files are self-consistent.
double quantize_score(double v);

/// Per-image seed derived from the run seed and the image id.
std::uint64_t image_seed(std::uint64_t run_seed, std::string_view image_id);

/// Map as it is stored on disk (float32) and brought into probability state:
/// resized to (height, width), then renormalized if it already is a distribution,
/// otherwise min-max normalized and passed through a softmax.
Map2D ingest_map(const Map2D& map, int height, int width);

EvaluationResult evaluate_variants(const DatasetIndex& dataset, const SourceFactory& sources,
                                   const EvaluationConfig& config);

/// Looks for <maps_root>/<id>.(dfm|png|jpg|jpeg) for every dataset id.
MetricReport evaluate_external(const DatasetIndex& dataset, const std::filesystem::path& maps_root,
                               const std::string& model_name, const EvaluationConfig& config);

/// Tests between consecutive models of each metric's ranking, or between every
/// pair when all_pairs is set. Reports must cover the same image ids.
std::vector<PairwiseTest> ranked_tests(const std::vector<MetricReport>& reports, bool all_pairs);

/// Model names ordered best first for one metric.
std::vector<std::string> ranking(const std::vector<MetricReport>& reports, Metric metric);

/// scores.csv, summary.csv, ttests.csv, ranking.csv, roc_<model>.csv,
/// roc_borji_<model>.csv and config.json.
void emit_report(const std::vector<MetricReport>& reports, const std::vector<PairwiseTest>& tests,
                 const std::filesystem::path& out_dir);

}  // namespace deepfeat
