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

#include "deepfeat/topdown.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "deepfeat/error.hpp"

namespace deepfeat {

namespace {

Map2D weighted_activations(const ClassActivationInputs& in, const std::vector<double>& unit_weights) {
  Map2D out(in.height, in.width);
  auto dst = out.values();
  for (int k = 0; k < in.units; ++k) {
    const double wk = unit_weights[k];
    if (wk == 0.0) continue;
    const auto a = in.activation(k);
    for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += wk * a[p];
  }
  return out;
}

}  // namespace

Map2D class_activation_map(const ClassActivationInputs& inputs, int cls) {
  inputs.validate();
  if (cls < 0 || cls >= inputs.classes) {
    throw UsageError("class index " + std::to_string(cls) + " out of range [0, " + std::to_string(inputs.classes) + ")");
  }
  std::vector<double> w(inputs.units);
  for (int k = 0; k < inputs.units; ++k) w[k] = inputs.weight(k, cls);
  return weighted_activations(inputs, w);
}

Map2D topdown_map(const ClassActivationInputs& inputs, int out_h, int out_w, int top_classes) {
  inputs.validate();
  std::vector<double> probs(inputs.class_probs.begin(), inputs.class_probs.end());
  if (top_classes > 0 && top_classes < inputs.classes) {
    std::vector<int> order(inputs.classes);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
    double kept = 0.0;
    for (int i = 0; i < top_classes; ++i) kept += probs[order[i]];
    for (int i = top_classes; i < inputs.classes; ++i) probs[order[i]] = 0.0;
    if (kept > 0.0) {
      for (double& p : probs) p /= kept;
    }
  }
  std::vector<double> collapsed(inputs.units, 0.0);
  for (int k = 0; k < inputs.units; ++k) {
    double acc = 0.0;
    for (int c = 0; c < inputs.classes; ++c) acc += probs[c] * inputs.weight(k, c);
    collapsed[k] = acc;
  }
  return resize_bilinear(weighted_activations(inputs, collapsed), out_h, out_w);
}

}  // namespace deepfeat
