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

// Pretrained-network quantities consumed by the saliency model: per-layer
// convolution responses at two scales, plus the inputs of the class
// activation map. Features come either from an ONNX residual classifier
// evaluated in-process or from DFB1 containers on disk.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepfeat/imaging.hpp"

namespace deepfeat {

enum class Scale : std::uint8_t { fine = 0, coarse = 1 };

/// The k response images of one convolution layer at one scale.
struct FeatureStack {
  int layer_index = 0;  // 1-based
  Scale scale = Scale::fine;
  int count = 0;  // k
  int height = 0;
  int width = 0;
  std::vector<float> data;  // count * height * width, map-major then row-major

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::span<const float> map(int i) const { return std::span<const float>(data).subspan(i * plane_size(), plane_size()); }
  std::span<float> map(int i) { return std::span<float>(data).subspan(i * plane_size(), plane_size()); }
  void validate() const;
};

/// Final activations, classifier weights and softmax class probabilities.
struct ClassActivationInputs {
  int units = 0;  // k_last
  int height = 0;
  int width = 0;
  int classes = 0;                 // C
  std::vector<float> activations;  // units * height * width
  std::vector<float> weights;      // units * classes, row-major by unit
  std::vector<float> class_probs;  // classes

  float weight(int unit, int cls) const { return weights[static_cast<std::size_t>(unit) * classes + cls]; }
  std::span<const float> activation(int unit) const {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    return std::span<const float>(activations).subspan(unit * n, n);
  }
  void validate() const;
};

struct FeatureBundle {
  std::vector<FeatureStack> fine;
  std::vector<FeatureStack> coarse;
  ClassActivationInputs cam;
  int source_height = 0;
  int source_width = 0;
  /// Resolution the fine pass was run at; the bottom-up layers are combined on this grid.
  int working_height = 0;
  int working_width = 0;

  std::size_t layer_count() const { return fine.size(); }
  void validate() const;
};

struct BackboneConfig {
  int working_long_side = 448;
  int size_multiple = 32;
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
  /// Number of non-shortcut convolutions the model must expose; 0 accepts any count.
  int expected_layers = 49;
};

/// Fine working size: longer side scaled to working_long_side, aspect kept,
/// each side rounded to the nearest multiple of size_multiple (ties up, minimum one multiple).
std::pair<int, int> working_size(int height, int width, const BackboneConfig& config);

/// Image tensor converted to a standardized CHW float buffer (grayscale replicated to RGB).
std::vector<float> to_network_input(const ImageTensor& img, const BackboneConfig& config);

/// One forward pass worth of outputs.
struct TrunkOutputs {
  std::vector<FeatureStack> stacks;
  int final_units = 0, final_height = 0, final_width = 0;
  std::vector<float> final_activation;
  std::vector<float> logits;
};

/// An ONNX residual classifier evaluated in-process. One instance must not be used
/// from several threads at once; create one per worker instead.
class OnnxBackbone {
 public:
  explicit OnnxBackbone(const std::filesystem::path& model_path, BackboneConfig config = {});
  ~OnnxBackbone();
  OnnxBackbone(OnnxBackbone&&) noexcept;
  OnnxBackbone& operator=(OnnxBackbone&&) noexcept;

  FeatureBundle extract_features(const ImageTensor& img);

  /// Runs the trunk on a standardized CHW input of the given size.
  TrunkOutputs run(std::span<const float> chw, int height, int width, Scale scale);

  int conv_layer_count() const;
  int class_count() const;
  /// CRC32 of the model file, used in feature-cache keys.
  std::uint32_t model_hash() const;
  const BackboneConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Numerically stable softmax in double precision.
std::vector<double> softmax(std::span<const float> logits);

// --- DFB1 container ---
//
// "DFB1", u32 version, u32 layer_count, u16 scale_count, then per scale (fine,
// coarse) and per layer: u32 layer_index, k, h, w and k*h*w float32 values.
// CAM block: u32 k_last, h, w, C, activations, weights (by unit), class_probs.
// Then u32 source_h, source_w, working_h, working_w. Trailer: CRC32 of every
// byte between the magic and the trailer. All integers and floats little-endian.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

void save_features(const FeatureBundle& bundle, const std::filesystem::path& path);
FeatureBundle load_features(const std::filesystem::path& path);
std::vector<char> encode_features(const FeatureBundle& bundle);
FeatureBundle decode_features(std::span<const char> bytes, const std::string& context = "DFB1");

std::uint32_t crc32_of(std::span<const char> bytes);

// --- feature sources ---

class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual FeatureBundle features(const std::string& image_id, const std::filesystem::path& image_path) = 0;
};

class BackboneSource : public FeatureSource {
 public:
  explicit BackboneSource(OnnxBackbone backbone) : backbone_(std::move(backbone)) {}
  FeatureBundle features(const std::string& image_id, const std::filesystem::path& image_path) override;
  OnnxBackbone& backbone() { return backbone_; }

 private:
  OnnxBackbone backbone_;
};

/// DFB1 cache keyed by (image id, backbone hash, working resolution). Misses are
/// filled from the inner source and published with an atomic rename, so readers
/// never see partial files.
class CachedSource : public FeatureSource {
 public:
  CachedSource(std::unique_ptr<FeatureSource> inner, std::filesystem::path dir, std::uint32_t backbone_hash,
               int working_long_side);
  FeatureBundle features(const std::string& image_id, const std::filesystem::path& image_path) override;
  std::filesystem::path entry_path(const std::string& image_id) const;

 private:
  std::unique_ptr<FeatureSource> inner_;
  std::filesystem::path dir_;
  std::uint32_t hash_;
  int long_side_;
};

}  // namespace deepfeat
