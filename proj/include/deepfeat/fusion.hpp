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

// Fusion of the bottom-up and top-down maps, the Gaussian center prior, the
// pixel softmax, and the four model variants built from them:
//   BU   softmax(unit(bottom-up))
//   TD   softmax(unit(top-down))
//   NCB  softmax((1-alpha) unit(td) + alpha unit(bu))
//   WCB  softmax((1-beta) NCB-map + beta center)
// Maps are combined on the working grid and resized to the output size before
// the softmax.

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "deepfeat/backbone.hpp"
#include "deepfeat/imaging.hpp"

namespace deepfeat {

struct FusionConfig {
  double alpha = 0.5;
  double beta = 0.5;
  double sigma_frac = 0.25;
  /// Keep only the most probable classes in the top-down map; 0 keeps all of them.
  int top_classes = 0;

  void validate() const;
};

enum class Variant { bu, td, ncb, wcb };

inline constexpr std::array<Variant, 4> kAllVariants{Variant::bu, Variant::td, Variant::ncb, Variant::wcb};

std::string variant_name(Variant v);  // "BU", "TD", "NCB", "WCB"
Variant parse_variant(std::string_view s);  // case-insensitive

/// (1 - alpha) unit(td) + alpha unit(bu). Both inputs are min-max normalized here.
Map2D fuse(const Map2D& bu, const Map2D& td, double alpha);

/// (1 - beta) y + beta center; center must be unit state.
Map2D apply_center_bias(const Map2D& y, const Map2D& center, double beta);

/// exp(v - max) / sum exp(v - max).
Map2D to_probability(const Map2D& m);

/// Branch maps on the working grid, shared by all variants of one image.
struct SaliencyComponents {
  Map2D bottom_up;  // raw sum of normalized layer responses
  Map2D top_down;   // raw probability-weighted CAM
  Map2D center;     // unit Gaussian prior
};

SaliencyComponents compute_components(const FeatureBundle& bundle, const FusionConfig& config);

Map2D predict(const SaliencyComponents& parts, Variant variant, const FusionConfig& config, int out_h, int out_w);
Map2D predict(const FeatureBundle& bundle, Variant variant, const FusionConfig& config, int out_h, int out_w);

}  // namespace deepfeat
