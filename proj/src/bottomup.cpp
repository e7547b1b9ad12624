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

#include "deepfeat/bottomup.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deepfeat/error.hpp"

namespace deepfeat {

LayerResponse center_surround(const FeatureStack& fine, const FeatureStack& coarse) {
  if (fine.layer_index != coarse.layer_index) {
    throw UsageError("center_surround: layer index mismatch (" + std::to_string(fine.layer_index) + " vs " +
                     std::to_string(coarse.layer_index) + ")");
  }
  if (fine.count != coarse.count) throw UsageError("center_surround: response image counts differ");
  if (fine.scale != Scale::fine || coarse.scale != Scale::coarse) {
    throw UsageError("center_surround: expected a fine and a coarse stack");
  }
  if (fine.count < 1 || fine.plane_size() == 0 || coarse.plane_size() == 0) {
    throw UsageError("center_surround: empty feature stack");
  }

  LayerResponse out{fine.layer_index, Map2D(fine.height, fine.width)};
  auto acc = out.map.values();
  std::vector<float> upsampled(fine.plane_size());
  for (int i = 0; i < fine.count; ++i) {
    resize_bilinear(coarse.map(i), coarse.height, coarse.width, upsampled, fine.height, fine.width);
    const auto r0 = fine.map(i);
    for (std::size_t p = 0; p < acc.size(); ++p) {
      acc[p] += std::abs(static_cast<double>(r0[p]) - static_cast<double>(upsampled[p]));
    }
  }
  return out;
}

Map2D combine_layers(std::span<const LayerResponse> responses, int out_h, int out_w) {
  if (responses.empty()) throw UsageError("combine_layers: no layer responses");
  if (out_h < 1 || out_w < 1) throw UsageError("combine_layers: output dimensions must be >= 1");

  std::vector<const LayerResponse*> ordered;
  ordered.reserve(responses.size());
  for (const auto& r : responses) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const LayerResponse* a, const LayerResponse* b) { return a->layer_index < b->layer_index; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->layer_index == ordered[i - 1]->layer_index) {
      throw UsageError("combine_layers: duplicate layer index " + std::to_string(ordered[i]->layer_index));
    }
  }

  Map2D sum(out_h, out_w);
  auto dst = sum.values();
  for (const LayerResponse* r : ordered) {
    const Map2D unit = minmax_normalize(resize_bilinear(r->map, out_h, out_w));
    const auto src = unit.values();
    for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += src[p];
  }
  return sum;
}

std::vector<LayerResponse> layer_responses(const FeatureBundle& bundle) {
  if (bundle.fine.size() != bundle.coarse.size()) throw DataError("fine and coarse layer counts differ");
  std::vector<LayerResponse> out;
  out.reserve(bundle.fine.size());
  for (std::size_t i = 0; i < bundle.fine.size(); ++i) out.push_back(center_surround(bundle.fine[i], bundle.coarse[i]));
  return out;
}

Map2D bottomup_map(const FeatureBundle& bundle, int out_h, int out_w) {
  // One layer at a time keeps peak memory at a single response map.
  if (bundle.fine.empty()) throw DataError("feature bundle has no layers");
  if (bundle.fine.size() != bundle.coarse.size()) throw DataError("fine and coarse layer counts differ");
  std::vector<std::size_t> order(bundle.fine.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return bundle.fine[a].layer_index < bundle.fine[b].layer_index; });
  Map2D sum(out_h, out_w);
  auto dst = sum.values();
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (k > 0 && bundle.fine[i].layer_index == bundle.fine[order[k - 1]].layer_index) {
      throw DataError("duplicate layer index in feature bundle");
    }
    const LayerResponse r = center_surround(bundle.fine[i], bundle.coarse[i]);
    const Map2D unit = minmax_normalize(resize_bilinear(r.map, out_h, out_w));
    const auto src = unit.values();
    for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += src[p];
  }
  return sum;
}

}  // namespace deepfeat
