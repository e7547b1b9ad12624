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

// Bottom-up saliency: fine-versus-coarse contrast of every convolution layer,
// normalized and summed with equal weight.

#pragma once

#include <span>
#include <vector>

#include "deepfeat/backbone.hpp"
#include "deepfeat/imaging.hpp"

namespace deepfeat {

struct LayerResponse {
  int layer_index = 0;
  Map2D map;  // raw, non-negative, on the fine feature grid
};

/// Upsamples every coarse response image onto the fine grid and sums the
/// absolute differences over the k response images.
LayerResponse center_surround(const FeatureStack& fine, const FeatureStack& coarse);

/// Resizes each response to out_h x out_w, min-max normalizes it, and sums the
/// results in ascending layer order. Layer indices must be unique.
Map2D combine_layers(std::span<const LayerResponse> responses, int out_h, int out_w);

std::vector<LayerResponse> layer_responses(const FeatureBundle& bundle);

/// combine_layers over all layers of the bundle.
Map2D bottomup_map(const FeatureBundle& bundle, int out_h, int out_w);

}  // namespace deepfeat
