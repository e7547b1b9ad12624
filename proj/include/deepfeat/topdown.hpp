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

#pragma once

#include "deepfeat/backbone.hpp"
#include "deepfeat/imaging.hpp"

namespace deepfeat {

/// CAM_c(x,y) = sum_k w[k][c] * a_k(x,y) at the activation resolution. Negative values are kept.
Map2D class_activation_map(const ClassActivationInputs& inputs, int cls);

/// Probability-weighted sum of all class activation maps, resized to out_h x out_w.
/// The class weights are collapsed first: sum_k (sum_c S_c w[k][c]) a_k.
/// With top_classes > 0 only the most probable classes are kept, their
/// probabilities renormalized to sum to one.
Map2D topdown_map(const ClassActivationInputs& inputs, int out_h, int out_w, int top_classes = 0);

}  // namespace deepfeat
