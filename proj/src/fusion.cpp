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

#include "deepfeat/fusion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "deepfeat/bottomup.hpp"
#include "deepfeat/error.hpp"
#include "deepfeat/topdown.hpp"

namespace deepfeat {

void FusionConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0,1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw UsageError("beta must lie in [0,1]");
  if (!(sigma_frac > 0.0) || !std::isfinite(sigma_frac)) throw UsageError("sigma_frac must be positive");
  if (top_classes < 0) throw UsageError("top_classes must be >= 0");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::bu: return "BU";
    case Variant::td: return "TD";
    case Variant::ncb: return "NCB";
    case Variant::wcb: return "WCB";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "bu") return Variant::bu;
  if (lower == "td") return Variant::td;
  if (lower == "ncb") return Variant::ncb;
  if (lower == "wcb") return Variant::wcb;
  throw UsageError("unknown variant '" + std::string(s) + "' (expected bu, td, ncb or wcb)");
}

Map2D fuse(const Map2D& bu, const Map2D& td, double alpha) {
  if (!bu.same_shape(td)) throw UsageError("fuse: dimension mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0,1]");
  const Map2D ub = minmax_normalize(bu);
  const Map2D ut = minmax_normalize(td);
  Map2D y(bu.height(), bu.width());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (1.0 - alpha) * ut[i] + alpha * ub[i];
  return y;
}

Map2D apply_center_bias(const Map2D& y, const Map2D& center, double beta) {
  if (!y.same_shape(center)) throw UsageError("apply_center_bias: dimension mismatch");
  if (!(beta >= 0.0 && beta <= 1.0)) throw UsageError("beta must lie in [0,1]");
  if (!satisfies_state(center.values(), MapState::unit)) throw UsageError("center map must be unit state");
  Map2D out(y.height(), y.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - beta) * y[i] + beta * center[i];
  return out;
}

Map2D to_probability(const Map2D& m) {
  if (m.empty()) throw UsageError("to_probability: empty map");
  const auto vals = m.values();
  if (!std::all_of(vals.begin(), vals.end(), [](double v) { return std::isfinite(v); })) {
    throw DataError("to_probability: non-finite input");
  }
  const double mx = *std::max_element(vals.begin(), vals.end());
  Map2D out(m.height(), m.width());
  double total = 0.0;
  for (std::size_t i = 0; i < vals.size(); ++i) total += out[i] = std::exp(vals[i] - mx);
  for (double& v : out.values()) v /= total;
  out.set_state(MapState::probability);
  return out;
}

SaliencyComponents compute_components(const FeatureBundle& bundle, const FusionConfig& config) {
  config.validate();
  const int h = bundle.working_height, w = bundle.working_width;
  if (h < 1 || w < 1) throw DataError("feature bundle has no working resolution");
  return {bottomup_map(bundle, h, w), topdown_map(bundle.cam, h, w, config.top_classes),
          gaussian_center_map(h, w, config.sigma_frac)};
}

Map2D predict(const SaliencyComponents& parts, Variant variant, const FusionConfig& config, int out_h, int out_w) {
  config.validate();
  Map2D working;
  switch (variant) {
    case Variant::bu:
      working = minmax_normalize(parts.bottom_up);
      break;
    case Variant::td:
      working = minmax_normalize(parts.top_down);
      break;
    case Variant::ncb:
      working = fuse(parts.bottom_up, parts.top_down, config.alpha);
      break;
    case Variant::wcb:
      working = apply_center_bias(fuse(parts.bottom_up, parts.top_down, config.alpha), parts.center, config.beta);
      break;
  }
  return to_probability(resize_bilinear(working, out_h, out_w));
}

Map2D predict(const FeatureBundle& bundle, Variant variant, const FusionConfig& config, int out_h, int out_w) {
  return predict(compute_components(bundle, config), variant, config, out_h, out_w);
}

}  // namespace deepfeat
