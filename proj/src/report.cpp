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


#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "deepfeat/error.hpp"
#include "deepfeat/harness.hpp"

namespace deepfeat {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string file_safe(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) c = '_';
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw DataError("cannot write " + path.string());
}

std::string roc_csv(const std::vector<double>& tpr) {
  std::ostringstream s;
  s << "fpr,tpr\n";
  const std::size_t n = tpr.size();
  for (std::size_t g = 0; g < n; ++g) {
    s << fmt(n > 1 ? static_cast<double>(g) / (n - 1) : 0.0) << ',' << fmt(tpr[g]) << '\n';
  }
  return s.str();
}

}  // namespace

void emit_report(const std::vector<MetricReport>& reports, const std::vector<PairwiseTest>& tests,
                 const fs::path& out_dir) {
  if (reports.empty()) throw UsageError("no reports to write");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir)) throw DataError("cannot create output directory " + out_dir.string());

  std::ostringstream scores, summary, ttests, ranks;
  scores << "model,image_id,auc,auc_borji,cc,kl\n";
  summary << "model,metric,mean,sem,n\n";
  for (const auto& r : reports) {
    for (const auto& row : r.rows) {
      scores << r.model << ',' << row.image_id;
      for (double v : row.values) scores << ',' << fmt(v);
      scores << '\n';
    }
    for (Metric m : kAllMetrics) {
      const auto& a = r.aggregates[static_cast<std::size_t>(m)];
      summary << r.model << ',' << metric_name(m) << ',' << fmt(a.mean) << ',' << fmt(a.sem) << ',' << a.n << '\n';
    }
  }

  ttests << "model_a,model_b,metric,t,p,significant\n";
  for (const auto& t : tests) {
    ttests << t.model_a << ',' << t.model_b << ',' << t.metric << ',' << fmt(t.t) << ',' << fmt(t.p) << ','
           << (t.significant ? "true" : "false") << '\n';
  }

  ranks << "metric,rank,model,mean,sem\n";
  for (Metric m : kAllMetrics) {
    const auto order = ranking(reports, m);
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (const auto& r : reports) {
        if (r.model != order[i]) continue;
        const auto& a = r.aggregates[static_cast<std::size_t>(m)];
        ranks << metric_name(m) << ',' << i + 1 << ',' << r.model << ',' << fmt(a.mean) << ',' << fmt(a.sem) << '\n';
        break;
      }
    }
  }

  write_text(out_dir / "scores.csv", scores.str());
  write_text(out_dir / "summary.csv", summary.str());
  write_text(out_dir / "ttests.csv", ttests.str());
  write_text(out_dir / "ranking.csv", ranks.str());
  for (const auto& r : reports) {
    write_text(out_dir / ("roc_" + file_safe(r.model) + ".csv"), roc_csv(r.roc_tpr));
    write_text(out_dir / ("roc_borji_" + file_safe(r.model) + ".csv"), roc_csv(r.roc_borji_tpr));
  }

  const ConfigEcho& c = reports.front().config;
  nlohmann::ordered_json j;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["sigma_frac"] = c.sigma_frac;
  j["seed"] = c.seed;
  j["epsilon"] = c.epsilon;
  j["borji_splits"] = c.borji_splits;
  j["models"] = nlohmann::json::array();
  for (const auto& r : reports) j["models"].push_back(r.model);
  write_text(out_dir / "config.json", j.dump(2) + "\n");
}

}  // namespace deepfeat
