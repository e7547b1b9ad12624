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


#include <cmath>
#include <sstream>

#include "deepfeat/error.hpp"
#include "deepfeat/harness.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace deepfeat;
namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(dftest::slurp(p));
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

void expect_error_contains(const std::function<void()>& fn, const std::string& needle) {
  try {
    fn();
    ADD_FAILURE() << "no error, expected one mentioning: " << needle;
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

EvaluationConfig small_config() {
  EvaluationConfig c;
  c.metric.borji_splits = 20;
  return c;
}

}  // namespace

TEST(Dataset, LoadsSortedEntries) {
  dftest::TempDir tmp("ds");
  dftest::make_dataset(tmp.path(), 3);
  const auto ds = load_dataset(tmp.path());
  ASSERT_EQ(ds.entries.size(), 3u);
  EXPECT_EQ(ds.entries[0].id, "astronaut");
  EXPECT_EQ(ds.entries[1].id, "camera");
  EXPECT_EQ(ds.entries[2].id, "chelsea");
  const auto img = load_image(ds.entries[2].image);
  const auto gt = load_ground_truth(ds.entries[2], img.height, img.width);
  EXPECT_NO_THROW(gt.validate());
  EXPECT_GT(gt.fixation_count(), 10u);
}

TEST(Dataset, MissingSubdirectory) {
  dftest::TempDir tmp("ds");
  dftest::make_dataset(tmp.path(), 2);
  fs::remove_all(tmp / "fixations" / "maps");
  expect_error_contains([&] { load_dataset(tmp.path()); }, "maps");
}

TEST(Dataset, IdMismatch) {
  dftest::TempDir tmp("ds");
  dftest::make_dataset(tmp.path(), 2);
  fs::remove(tmp / "fixations" / "points" / "camera.csv");
  expect_error_contains([&] { load_dataset(tmp.path()); }, "camera");
}

TEST(Dataset, OutOfBoundsFixationNamesFileAndRow) {
  dftest::TempDir tmp("ds");
  dftest::make_dataset(tmp.path(), 1);
  const auto img = load_image(tmp / "images" / "astronaut.png");
  const auto csv = tmp / "fixations" / "points" / "astronaut.csv";
  std::ofstream(csv) << "x,y\n3,4\n" << img.width << ",0\n";
  expect_error_contains([&] { load_dataset(tmp.path()); }, "astronaut.csv row 3");
  std::ofstream(csv) << "x,y\n3,abc\n";
  expect_error_contains([&] { load_dataset(tmp.path()); }, "astronaut.csv row 2");
}

TEST(Dataset, DegenerateDensity) {
  dftest::TempDir tmp("ds");
  dftest::make_dataset(tmp.path(), 1);
  const auto img = load_image(tmp / "images" / "astronaut.png");
  save_png(Map2D(img.height, img.width, 0.0, MapState::unit), tmp / "fixations" / "maps" / "astronaut.png");
  expect_error_contains([&] { load_dataset(tmp.path()); }, "degenerate density map");
}

TEST(Dataset, DensitySizeMustMatchImage) {
  dftest::TempDir tmp("ds");
  dftest::make_dataset(tmp.path(), 1);
  save_png(Map2D(5, 5, 0.5, MapState::unit), tmp / "fixations" / "maps" / "astronaut.png");
  EXPECT_THROW(load_dataset(tmp.path()), DataError);
}

TEST(Dataset, RegeneratedDensity) {
  dftest::TempDir tmp("ds");
  dftest::make_dataset(tmp.path(), 1);
  DatasetOptions opts;
  opts.regen_density_sigma = 3.0;
  const auto ds = load_dataset(tmp.path(), opts);
  const auto img = load_image(ds.entries[0].image);
  const auto gt = load_ground_truth(ds.entries[0], img.height, img.width, opts);
  EXPECT_NO_THROW(gt.validate());
}

TEST(Evaluate, PairingConsistencyAndDeterminism) {
  dftest::TempDir tmp("eval");
  dftest::make_dataset(tmp / "ds");
  const auto ds = load_dataset(tmp / "ds");
  auto cfg = small_config();
  const auto r1 = evaluate_variants(ds, dftest::fake_factory(), cfg);
  cfg.workers = 3;
  const auto r2 = evaluate_variants(ds, dftest::fake_factory(), cfg);
  ASSERT_EQ(r1.reports.size(), 4u);
  for (const auto& rep : r1.reports) {
    ASSERT_EQ(rep.rows.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(rep.rows[i].image_id, ds.entries[i].id);
    EXPECT_EQ(rep.aggregates[0].n, 5u);
  }
  emit_report(r1.reports, r1.tests, tmp / "a");
  emit_report(r2.reports, r2.tests, tmp / "b");
  for (const char* f : {"scores.csv", "summary.csv", "ttests.csv", "ranking.csv", "roc_WCB.csv", "roc_borji_BU.csv",
                        "config.json"}) {
    EXPECT_EQ(dftest::slurp(tmp / "a" / f), dftest::slurp(tmp / "b" / f)) << f;
  }
  // consecutive ranked pairs: 3 per metric for 4 models
  EXPECT_EQ(r1.tests.size(), 12u);
  cfg.all_pairs = true;
  EXPECT_EQ(ranked_tests(r1.reports, true).size(), 24u);
}

TEST(Evaluate, SummaryReproducibleFromScores) {
  dftest::TempDir tmp("eval");
  dftest::make_dataset(tmp / "ds");
  const auto ds = load_dataset(tmp / "ds");
  const auto r = evaluate_variants(ds, dftest::fake_factory(), small_config());
  emit_report(r.reports, r.tests, tmp / "out");
  const auto scores = read_csv(tmp / "out" / "scores.csv");
  const auto summary = read_csv(tmp / "out" / "summary.csv");
  ASSERT_EQ(scores[0], (std::vector<std::string>{"model", "image_id", "auc", "auc_borji", "cc", "kl"}));
  ASSERT_EQ(summary[0], (std::vector<std::string>{"model", "metric", "mean", "sem", "n"}));
  const std::vector<std::string> metrics{"AUC", "AUC_Borji", "CC", "KL"};
  for (std::size_t s = 1; s < summary.size(); ++s) {
    const auto& row = summary[s];
    const auto col = static_cast<std::size_t>(std::find(metrics.begin(), metrics.end(), row[1]) - metrics.begin()) + 2;
    std::vector<double> values;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      if (scores[i][0] == row[0]) values.push_back(std::stod(scores[i][col]));
    }
    const auto sm = summarize(values);
    char mean[64], sem[64];
    std::snprintf(mean, sizeof mean, "%.6f", sm.mean);
    std::snprintf(sem, sizeof sem, "%.6f", sm.sem);
    EXPECT_EQ(row[2], mean) << row[0] << " " << row[1];
    EXPECT_EQ(row[3], sem) << row[0] << " " << row[1];
    EXPECT_NEAR(std::stod(row[2]), sm.mean, 5e-7);
    EXPECT_EQ(row[4], std::to_string(values.size()));
  }
  // the in-memory aggregates are computed from the same serialized values
  for (const auto& rep : r.reports) {
    for (Metric m : kAllMetrics) {
      const auto col = rep.column(m);
      for (double v : col) EXPECT_EQ(v, quantize_score(v));
      EXPECT_NEAR(summarize(col).mean, rep.aggregates[static_cast<std::size_t>(m)].mean, 1e-12);
    }
  }
}

TEST(Evaluate, SkipPolicy) {
  dftest::TempDir tmp("eval");
  dftest::make_dataset(tmp / "ds");
  const auto ds = load_dataset(tmp / "ds");
  auto cfg = small_config();
  EXPECT_THROW(evaluate_variants(ds, dftest::fake_factory({"coffee"}), cfg), DataError);  // 1/5 > 10%
  cfg.max_skip_fraction = 0.25;
  const auto r = evaluate_variants(ds, dftest::fake_factory({"coffee"}), cfg);
  EXPECT_EQ(r.skipped, (std::vector<std::string>{"coffee"}));
  for (const auto& rep : r.reports) {
    ASSERT_EQ(rep.rows.size(), 4u);
    for (const auto& row : rep.rows) EXPECT_NE(row.image_id, "coffee");
  }
}

TEST(Evaluate, IdenticalModelsAreNotSignificant) {
  dftest::TempDir tmp("eval");
  dftest::make_dataset(tmp / "ds", 3);
  const auto ds = load_dataset(tmp / "ds");
  auto cfg = small_config();
  cfg.variants = {Variant::wcb};
  auto r = evaluate_variants(ds, dftest::fake_factory(), cfg);
  auto twin = r.reports[0];
  twin.model = "WCB_copy";
  r.reports.push_back(twin);
  const auto tests = ranked_tests(r.reports, false);
  ASSERT_EQ(tests.size(), 4u);
  for (const auto& t : tests) {
    EXPECT_EQ(t.t, 0.0);
    EXPECT_EQ(t.p, 1.0);
    EXPECT_FALSE(t.significant);
  }
}

TEST(External, SelfConsistencyWithDumpedMaps) {
  dftest::TempDir tmp("ext");
  dftest::make_dataset(tmp / "ds");
  const auto ds = load_dataset(tmp / "ds");
  auto cfg = small_config();
  cfg.dump_dir = tmp / "dump";
  const auto r = evaluate_variants(ds, dftest::fake_factory(), cfg);
  const auto ext = evaluate_external(ds, tmp / "dump" / "WCB", "ext", cfg);
  const auto& wcb = r.reports[3];
  ASSERT_EQ(wcb.model, "WCB");
  ASSERT_EQ(ext.rows.size(), wcb.rows.size());
  for (std::size_t i = 0; i < ext.rows.size(); ++i) {
    for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(ext.rows[i].values[m], wcb.rows[i].values[m], 1e-6);
  }
}

TEST(External, HalfResolutionMapsAreUpsampled) {
  dftest::TempDir tmp("ext");
  dftest::make_dataset(tmp / "ds", 2);
  const auto ds = load_dataset(tmp / "ds");
  fs::create_directories(tmp / "half");
  fs::create_directories(tmp / "full");
  std::mt19937_64 rng(3);
  for (const auto& e : ds.entries) {
    const auto img = load_image(e.image);
    const auto half = dftest::random_map(rng, img.height / 2, img.width / 2);
    write_raw_map(half, tmp / "half" / (e.id + ".dfm"));
    Map2D stored = read_raw_map(tmp / "half" / (e.id + ".dfm"));
    write_raw_map(resize_bilinear(stored, img.height, img.width), tmp / "full" / (e.id + ".dfm"));
  }
  const auto cfg = small_config();
  const auto a = evaluate_external(ds, tmp / "half", "half", cfg);
  const auto b = evaluate_external(ds, tmp / "full", "full", cfg);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    for (std::size_t m = 0; m < 4; ++m) EXPECT_NEAR(a.rows[i].values[m], b.rows[i].values[m], 1e-6);
  }
}

TEST(External, MissingMap) {
  dftest::TempDir tmp("ext");
  dftest::make_dataset(tmp / "ds", 2);
  const auto ds = load_dataset(tmp / "ds");
  fs::create_directories(tmp / "maps");
  save_png(Map2D(4, 4, 0.5, MapState::unit), tmp / "maps" / "astronaut.png");
  expect_error_contains([&] { evaluate_external(ds, tmp / "maps", "m", small_config()); }, "camera");
}

TEST(IngestMap, ProbabilityPassThroughAndSoftmaxOtherwise) {
  Map2D p(1, 2, std::vector<double>{0.25, 0.75});
  const auto a = ingest_map(p, 1, 2);
  EXPECT_DOUBLE_EQ(a[1], 0.75);
  const auto b = ingest_map(Map2D(1, 2, std::vector<double>{3.0, 5.0}), 1, 2);
  EXPECT_NEAR(b[1], std::exp(1.0) / (1.0 + std::exp(1.0)), 1e-12);
  EXPECT_EQ(b.state(), MapState::probability);
}

TEST(Report, EmptyTestsAndRowShape) {
  dftest::TempDir tmp("rep");
  MetricReport r;
  r.model = "WCB";
  r.rows.push_back({"a", {0.857, 0.8, 0.443, 1.412}});
  r.aggregates[0] = {0.857, 0.002, 1003};
  r.roc_tpr = r.roc_borji_tpr = {0.0, 1.0};
  emit_report({r}, {}, tmp.path());
  EXPECT_EQ(dftest::slurp(tmp / "ttests.csv"), "model_a,model_b,metric,t,p,significant\n");
  const auto summary = dftest::slurp(tmp / "summary.csv");
  EXPECT_NE(summary.find("\nWCB,AUC,0.857000,0.002000,1003\n"), std::string::npos) << summary;
  EXPECT_EQ(dftest::slurp(tmp / "roc_WCB.csv"), "fpr,tpr\n0.000000,0.000000\n1.000000,1.000000\n");
  EXPECT_THROW(emit_report({}, {}, tmp.path()), UsageError);
}

TEST(Seeds, PerImageSeedDependsOnIdAndRunSeed) {
  EXPECT_EQ(image_seed(42, "a"), image_seed(42, "a"));
  EXPECT_NE(image_seed(42, "a"), image_seed(42, "b"));
  EXPECT_NE(image_seed(42, "a"), image_seed(43, "a"));
  EXPECT_EQ(quantize_score(0.1234564), 0.123456);
}
