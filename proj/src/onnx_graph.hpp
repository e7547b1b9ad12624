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

// Minimal ONNX interpreter for residual image classifiers (batch size 1, float32).
// Supported operators: Conv, BatchNormalization, Relu, Add, MaxPool,
// GlobalAveragePool, Flatten, Reshape, Gemm, MatMul, Identity, Constant, Softmax.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace deepfeat::onnx_rt {

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
  std::vector<std::int64_t> ints;  // only for int64 constants (reshape targets)
  bool is_int = false;

  std::int64_t numel() const;
};

enum class Op {
  conv,
  batch_norm,
  relu,
  add,
  max_pool,
  global_average_pool,
  flatten,
  reshape,
  gemm,
  matmul,
  identity,
  softmax,
};

struct Node {
  Op op;
  std::string name;
  std::vector<int> inputs;  // value ids, -1 for omitted optional inputs
  int output = -1;
  // attributes (only the ones relevant to the op are meaningful)
  std::vector<std::int64_t> kernel, strides, pads, dilations;
  std::int64_t group = 1;
  std::int64_t axis = 1;
  bool ceil_mode = false;
  bool trans_a = false, trans_b = false;
  float alpha = 1.0f, beta = 1.0f, epsilon = 1e-5f;
};

/// A graph lowered to value ids. Constant values (initializers, Constant nodes)
/// live in `constants`; everything else is computed per run.
class Graph {
 public:
  static Graph load(const std::filesystem::path& path);
  static Graph parse(std::span<const char> bytes, const std::string& context);

  struct Capture {
    int value = -1;        // tensor captured as the layer response
    int layer_index = 0;   // 1-based
  };

  struct Outputs {
    std::vector<Tensor> captured;  // aligned with captures()
    Tensor final_activation;
    Tensor logits;
  };

  Outputs run(Tensor input) const;

  const std::vector<Capture>& captures() const { return captures_; }
  /// Classifier weights transposed to (units x classes).
  const std::vector<float>& classifier_weights() const { return classifier_weights_; }
  int classifier_units() const { return classifier_units_; }
  int classifier_classes() const { return classifier_classes_; }

 private:
  void analyze();

  std::vector<std::string> value_names_;
  std::vector<Tensor> constants_;   // indexed by value id; empty shape+data means "not constant"
  std::vector<bool> is_constant_;
  std::vector<Node> nodes_;
  int input_value_ = -1;
  int logits_value_ = -1;
  int final_activation_value_ = -1;
  std::vector<Capture> captures_;
  std::vector<int> last_use_;  // node index of last consumer per value
  std::vector<float> classifier_weights_;
  int classifier_units_ = 0;
  int classifier_classes_ = 0;
};

// Kernels, exposed for unit tests.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const Node& attrs);
Tensor max_pool2d(const Tensor& x, const Node& attrs);
Tensor batch_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, const Tensor& mean,
                  const Tensor& var, float epsilon);
Tensor add_broadcast(const Tensor& a, const Tensor& b);

}  // namespace deepfeat::onnx_rt
