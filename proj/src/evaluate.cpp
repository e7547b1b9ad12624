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


#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <thread>

#include "deepfeat/error.hpp"
#include "deepfeat/harness.hpp"

namespace deepfeat {

namespace fs = std::filesystem;

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::auc: return "AUC";
    case Metric::auc_borji: return "AUC_Borji";
    case Metric::cc: return "CC";
    case Metric::kl: return "KL";
  }
  return "?";
}

bool higher_is_better(Metric m) { return m != Metric::kl; }

std::vector<double> MetricReport::column(Metric m) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.values[static_cast<std::size_t>(m)]);
  return out;
}

void EvaluationConfig::validate() const {
  fusion.validate();
  metric.validate();
  if (variants.empty()) throw UsageError("no variants requested");
  if (workers < 1) throw UsageError("workers must be >= 1");
  if (!(max_skip_fraction >= 0.0 && max_skip_fraction <= 1.0)) throw UsageError("max_skip_fraction outside [0, 1]");
  if (roc_grid_points < 2) throw UsageError("roc_grid_points must be >= 2");
}

ConfigEcho EvaluationConfig::echo() const {
  return {fusion.alpha, fusion.beta, fusion.sigma_frac, metric.rng_seed, metric.epsilon, metric.borji_splits};
}

double quantize_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return std::strtod(buf, nullptr);
}

std::uint64_t image_seed(std::uint64_t run_seed, std::string_view image_id) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : image_id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  // splitmix64 finalizer over the combination
  std::uint64_t z = run_seed ^ (h + 0x9e3779b97f4a7c15ull + (run_seed << 6) + (run_seed >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Map2D ingest_map(const Map2D& map, int height, int width) {
  if (map.empty()) throw DataError("empty saliency map");
  Map2D m = resize_bilinear(map, height, width);
  if (satisfies_state(m.values(), MapState::probability)) {
    double total = 0.0;
    for (double v : m.values()) total += v;
    for (double& v : m.values()) v /= total;
    m.set_state(MapState::probability);
    return m;
  }
  return to_probability(minmax_normalize(m));
}

namespace {

Map2D float_rounded(const Map2D& m) {
  Map2D out = m;
  for (double& v : out.values()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

struct ScoredMap {
  ImageScores scores;
  std::vector<double> roc_tpr, roc_borji_tpr;
};

ScoredMap score_map(const std::string& id, const Map2D& sal, const FixationGroundTruth& gt,
                    const EvaluationConfig& config) {
  MetricConfig mc = config.metric;
  mc.rng_seed = image_seed(config.metric.rng_seed, id);
  ScoredMap out;
  out.scores.image_id = id;
  const RocCurve dist = roc_dist(sal, gt);
  const RocCurve borji = roc_borji(sal, gt, mc);
  out.scores.values[static_cast<std::size_t>(Metric::auc)] = quantize_score(auc(dist));
  out.scores.values[static_cast<std::size_t>(Metric::auc_borji)] = quantize_score(auc(borji));
  out.scores.values[static_cast<std::size_t>(Metric::cc)] = quantize_score(cc(sal, gt.density));
  out.scores.values[static_cast<std::size_t>(Metric::kl)] = quantize_score(kl(sal, gt.density, mc.epsilon));
  out.roc_tpr = tpr_on_grid(dist, config.roc_grid_points);
  out.roc_borji_tpr = tpr_on_grid(borji, config.roc_grid_points);
  return out;
}

// Runs job(i) for i in [0, count) on up to `workers` threads. make_worker is
// called once per thread; the first exception stops the pool and is rethrown.
void run_pool(std::size_t count, int workers, const std::function<std::function<void(std::size_t)>()>& make_worker) {
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    try {
      auto job = make_worker();
      for (std::size_t i; !failed && (i = next.fetch_add(1)) < count;) job(i);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      failed = true;
    }
  };
  const int n = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), std::max<std::size_t>(count, 1)));
  if (n == 1) {
    body();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < n; ++t) threads.emplace_back(body);
    for (auto& t : threads) t.join();
  }
  if (error) std::rethrow_exception(error);
}

void accumulate_report(MetricReport& report, std::vector<ScoredMap>& scored, const EvaluationConfig& config) {
  report.config = config.echo();
  report.roc_tpr.assign(config.roc_grid_points, 0.0);
  report.roc_borji_tpr.assign(config.roc_grid_points, 0.0);
  for (auto& s : scored) {
    for (int g = 0; g < config.roc_grid_points; ++g) {
      report.roc_tpr[g] += s.roc_tpr[g];
      report.roc_borji_tpr[g] += s.roc_borji_tpr[g];
    }
    report.rows.push_back(std::move(s.scores));
  }
  if (!scored.empty()) {
    for (auto& v : report.roc_tpr) v /= static_cast<double>(scored.size());
    for (auto& v : report.roc_borji_tpr) v /= static_cast<double>(scored.size());
  }
  for (Metric m : kAllMetrics) {
    report.aggregates[static_cast<std::size_t>(m)] = summarize(report.column(m));
  }
}

std::mutex log_mutex;

void warn(const std::string& message) {
  std::lock_guard lock(log_mutex);
  std::cerr << "warning: " << message << "\n";
}

}  // namespace

EvaluationResult evaluate_variants(const DatasetIndex& dataset, const SourceFactory& sources,
                                   const EvaluationConfig& config) {
  config.validate();
  if (dataset.entries.empty()) throw UsageError("empty dataset");
  const std::size_t n = dataset.entries.size();
  const std::size_t nv = config.variants.size();

  struct Slot {
    bool done = false;
    bool skipped = false;
    std::vector<ScoredMap> per_variant;
  };
  std::vector<Slot> slots(n);

  if (!config.dump_dir.empty()) {
    for (Variant v : config.variants) fs::create_directories(config.dump_dir / variant_name(v));
  }

  run_pool(n, config.workers, [&]() -> std::function<void(std::size_t)> {
    std::shared_ptr<FeatureSource> source = sources();
    if (!source) throw UsageError("feature source factory returned nothing");
    return [&, source](std::size_t i) {
      const auto& entry = dataset.entries[i];
      FeatureBundle bundle;
      try {
        bundle = source->features(entry.id, entry.image);
      } catch (const DataError& e) {
        warn("skipping " + entry.id + ": " + e.what());
        slots[i].skipped = true;
        return;
      } catch (const ModelError& e) {
        warn("skipping " + entry.id + ": " + e.what());
        slots[i].skipped = true;
        return;
      }
      const int h = bundle.source_height, w = bundle.source_width;
      const auto gt = load_ground_truth(entry, h, w, config.dataset);
      const auto parts = compute_components(bundle, config.fusion);
      bundle = FeatureBundle{};  // release the layer stacks early
      std::vector<ScoredMap> scored;
      scored.reserve(nv);
      for (Variant v : config.variants) {
        const Map2D stored = float_rounded(predict(parts, v, config.fusion, h, w));
        if (!config.dump_dir.empty()) {
          write_raw_map(stored, config.dump_dir / variant_name(v) / (entry.id + ".dfm"));
        }
        scored.push_back(score_map(entry.id, ingest_map(stored, h, w), gt, config));
      }
      slots[i].per_variant = std::move(scored);
      slots[i].done = true;
    };
  });

  EvaluationResult result;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i].skipped) result.skipped.push_back(dataset.entries[i].id);
  }
  const double skip_fraction = static_cast<double>(result.skipped.size()) / n;
  if (result.skipped.size() == n || skip_fraction > config.max_skip_fraction) {
    throw DataError("skipped " + std::to_string(result.skipped.size()) + " of " + std::to_string(n) +
                    " images, above the allowed fraction");
  }

  for (std::size_t k = 0; k < nv; ++k) {
    MetricReport report;
    report.model = variant_name(config.variants[k]);
    std::vector<ScoredMap> scored;
    for (auto& slot : slots) {
      if (slot.done) scored.push_back(std::move(slot.per_variant[k]));
    }
    accumulate_report(report, scored, config);
    result.reports.push_back(std::move(report));
  }
  result.tests = ranked_tests(result.reports, config.all_pairs);
  return result;
}

MetricReport evaluate_external(const DatasetIndex& dataset, const fs::path& maps_root, const std::string& model_name,
                               const EvaluationConfig& config) {
  config.validate();
  if (dataset.entries.empty()) throw UsageError("empty dataset");
  std::error_code ec;
  if (!fs::is_directory(maps_root, ec)) throw DataError("external map directory not found: " + maps_root.string());
  const std::size_t n = dataset.entries.size();
  std::vector<ScoredMap> scored(n);

  run_pool(n, config.workers, [&]() -> std::function<void(std::size_t)> {
    return [&](std::size_t i) {
      const auto& entry = dataset.entries[i];
      fs::path found;
      for (const char* ext : {".dfm", ".png", ".jpg", ".jpeg"}) {
        const auto candidate = maps_root / (entry.id + ext);
        if (fs::is_regular_file(candidate)) {
          found = candidate;
          break;
        }
      }
      if (found.empty()) throw DataError("no " + model_name + " map for id " + entry.id + " in " + maps_root.string());
      const ImageTensor img = load_image(entry.image);
      const auto gt = load_ground_truth(entry, img.height, img.width, config.dataset);
      const Map2D sal = ingest_map(load_map(found), img.height, img.width);
      scored[i] = score_map(entry.id, sal, gt, config);
    };
  });

  MetricReport report;
  report.model = model_name;
  accumulate_report(report, scored, config);
  return report;
}

std::vector<std::string> ranking(const std::vector<MetricReport>& reports, Metric metric) {
  std::vector<std::size_t> order(reports.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto k = static_cast<std::size_t>(metric);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = reports[a].aggregates[k].mean, mb = reports[b].aggregates[k].mean;
    return higher_is_better(metric) ? ma > mb : ma < mb;
  });
  std::vector<std::string> names;
  for (std::size_t i : order) names.push_back(reports[i].model);
  return names;
}

std::vector<PairwiseTest> ranked_tests(const std::vector<MetricReport>& reports, bool all_pairs) {
  std::vector<PairwiseTest> tests;
  if (reports.size() < 2) return tests;
  for (const auto& r : reports) {
    if (r.rows.size() != reports.front().rows.size()) throw UsageError("reports cover different image sets");
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      if (r.rows[i].image_id != reports.front().rows[i].image_id) {
        throw UsageError("reports cover different image sets");
      }
    }
  }
  if (reports.front().rows.size() < 2) return tests;
  auto find = [&](const std::string& name) -> const MetricReport& {
    return *std::find_if(reports.begin(), reports.end(), [&](const MetricReport& r) { return r.model == name; });
  };
  for (Metric m : kAllMetrics) {
    const auto order = ranking(reports, m);
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const std::size_t last = all_pairs ? order.size() : i + 2;
      for (std::size_t j = i + 1; j < last; ++j) {
        auto t = paired_ttest(find(order[i]).column(m), find(order[j]).column(m));
        t.model_a = order[i];
        t.model_b = order[j];
        t.metric = metric_name(m);
        tests.push_back(std::move(t));
      }
    }
  }
  return tests;
}

}  // namespace deepfeat
