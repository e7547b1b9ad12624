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

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace deepfeat {

/// Decoded image, values in [0,1], row-major with interleaved channels (RGB order).
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, float fill = 0.0f);

  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool empty() const { return data.empty(); }
};

enum class MapState {
  raw,          ///< arbitrary finite values
  unit,         ///< all values in [0,1]
  probability,  ///< non-negative, sums to one
};

/// Single-channel row-major map of doubles tagged with the normalization state it is in.
class Map2D {
 public:
  Map2D() = default;
  Map2D(int height, int width, double fill = 0.0, MapState state = MapState::raw);
  Map2D(int height, int width, std::vector<double> values, MapState state = MapState::raw);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double operator()(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  MapState state() const { return state_; }
  /// Retags the map. Throws DataError if the values violate the requested state.
  void set_state(MapState state);

  bool same_shape(const Map2D& other) const { return height_ == other.height_ && width_ == other.width_; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
  MapState state_ = MapState::raw;
};

/// Tolerance on the total of a probability-state map.
inline constexpr double kProbabilitySumTolerance = 1e-6;

bool satisfies_state(std::span<const double> values, MapState state);

/// Reads a PNG or JPEG. 8-bit sources are scaled by 1/255, 16-bit by 1/65535.
/// Alpha channels are dropped; no EXIF orientation is applied.
ImageTensor load_image(const std::filesystem::path& path);

/// Bilinear resampling with half-pixel centers:
/// src = (dst + 0.5) * in / out - 0.5, clamped to the valid range.
void resize_bilinear(std::span<const float> in, int in_h, int in_w, std::span<float> out, int out_h, int out_w);
void resize_bilinear(std::span<const double> in, int in_h, int in_w, std::span<double> out, int out_h, int out_w);

/// Same-size resizes return the input unchanged (state kept); other sizes yield raw maps.
Map2D resize_bilinear(const Map2D& m, int out_h, int out_w);
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

/// (m - min) / (max - min). A constant map normalizes to all zeros.
Map2D minmax_normalize(const Map2D& m);

/// Isotropic Gaussian centered at ((w-1)/2, (h-1)/2) with sigma = sigma_frac * max(h, w).
Map2D gaussian_center_map(int h, int w, double sigma_frac = 0.25);

/// Separable Gaussian blur with edge replication; kernel radius is ceil(3 sigma).
Map2D gaussian_blur(const Map2D& m, double sigma);

// --- map serialization ---

/// 8-bit grayscale PNG. Unit-state maps are written as round-half-up(v * 255);
/// maps in any other state are min-max normalized first.
void save_png(const Map2D& m, const std::filesystem::path& path);

/// Raw float map: "DFM1", u32-LE height, u32-LE width, then float32-LE values row-major.
void write_raw_map(const Map2D& m, const std::filesystem::path& path);
Map2D read_raw_map(const std::filesystem::path& path);

/// Loads a map from a DFM1 file or an 8/16-bit PNG/JPEG (color sources are averaged
/// over channels; integer sources are scaled to [0,1]). The result is raw state.
Map2D load_map(const std::filesystem::path& path);

}  // namespace deepfeat
