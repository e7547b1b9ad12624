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


#include "deepfeat/stats.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "deepfeat/error.hpp"

namespace deepfeat {

Summary summarize(std::span<const double> values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / s.n;
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sem = std::sqrt(ss / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  return s;
}

PairwiseTest paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("paired_ttest: length mismatch");
  if (a.size() < 2) throw UsageError("paired_ttest: need at least two pairs");
  std::vector<double> d(a.size());
  bool all_zero = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d[i] = a[i] - b[i];
    all_zero = all_zero && d[i] == 0.0;
  }
  PairwiseTest r;
  if (all_zero) return r;  // t = 0, p = 1
  const Summary s = summarize(d);
  if (s.sem == 0.0) {
    r.t = std::copysign(std::numeric_limits<double>::infinity(), s.mean);
    r.p = 0.0;
    r.degenerate_variance = true;
  } else {
    r.t = s.mean / s.sem;
    boost::math::students_t dist(static_cast<double>(s.n - 1));
    r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t))));
  }
  r.significant = r.p <= kSignificanceLevel;
  return r;
}

}  // namespace deepfeat
