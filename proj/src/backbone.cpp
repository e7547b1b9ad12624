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

#include "deepfeat/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <thread>

#include <zlib.h>

#include "binary_io.hpp"
#include "deepfeat/error.hpp"
#include "onnx_graph.hpp"

namespace deepfeat {

void FeatureStack::validate() const {
  if (count < 1 || height < 1 || width < 1) throw DataError("feature stack must hold at least one non-empty map");
  if (data.size() != static_cast<std::size_t>(count) * height * width) throw DataError("feature stack size mismatch");
  for (float v : data) {
    if (!std::isfinite(v)) throw DataError("feature stack holds a non-finite value");
  }
}

void ClassActivationInputs::validate() const {
  if (units < 1 || height < 1 || width < 1 || classes < 1) throw DataError("empty class activation inputs");
  if (activations.size() != static_cast<std::size_t>(units) * height * width) {
    throw DataError("activation count mismatch");
  }
  if (weights.size() != static_cast<std::size_t>(units) * classes) {
    throw DataError("classifier weight rows must equal the activation map count");
  }
  if (class_probs.size() != static_cast<std::size_t>(classes)) throw DataError("class probability length mismatch");
  double total = 0.0;
  for (float p : class_probs) {
    if (!(p >= 0.0f)) throw DataError("class probabilities must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw DataError("class probabilities do not sum to one");
  }
}

void FeatureBundle::validate() const {
  if (fine.size() != coarse.size()) throw DataError("fine and coarse layer counts differ");
  for (std::size_t i = 0; i < fine.size(); ++i) {
    if (fine[i].layer_index != coarse[i].layer_index) throw DataError("fine and coarse layer indices differ");
    if (fine[i].count != coarse[i].count) {
      throw DataError("layer " + std::to_string(fine[i].layer_index) + " has different map counts per scale");
    }
    fine[i].validate();
    coarse[i].validate();
  }
  cam.validate();
}

std::pair<int, int> working_size(int height, int width, const BackboneConfig& config) {
  if (height < 1 || width < 1) throw UsageError("image must be non-empty");
  if (config.working_long_side < 1 || config.size_multiple < 1) throw UsageError("invalid working resolution");
  const double scale = static_cast<double>(config.working_long_side) / std::max(height, width);
  auto snap = [&](int side) {
    const double units = side * scale / config.size_multiple;
    return std::max(1, static_cast<int>(std::floor(units + 0.5))) * config.size_multiple;
  };
  return {snap(height), snap(width)};
}

std::vector<float> to_network_input(const ImageTensor& img, const BackboneConfig& config) {
  if (img.channels != 1 && img.channels != 3) throw DataError("image must have 1 or 3 channels");
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  std::vector<float> chw(3 * plane);
  for (int c = 0; c < 3; ++c) {
    const int src = img.channels == 3 ? c : 0;
    for (std::size_t i = 0; i < plane; ++i) {
      chw[c * plane + i] = (img.data[i * img.channels + src] - config.mean[c]) / config.stddev[c];
    }
  }
  return chw;
}

std::vector<double> softmax(std::span<const float> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += p[i] = std::exp(logits[i] - mx);
  for (double& v : p) v /= total;
  return p;
}

struct OnnxBackbone::Impl {
  onnx_rt::Graph graph;
  BackboneConfig config;
  std::uint32_t hash = 0;
};

OnnxBackbone::OnnxBackbone(const std::filesystem::path& model_path, BackboneConfig config)
    : impl_(std::make_unique<Impl>()) {
  std::vector<char> bytes;
  try {
    bytes = detail::read_file(model_path);
  } catch (const DataError&) {
    throw ModelError("model file missing or unreadable: " + model_path.string());
  }
  impl_->graph = onnx_rt::Graph::parse(bytes, model_path.string());
  impl_->hash = crc32_of(bytes);
  impl_->config = config;
  const int layers = static_cast<int>(impl_->graph.captures().size());
  if (config.expected_layers > 0 && layers != config.expected_layers) {
    throw ModelError("model exposes " + std::to_string(layers) + " non-shortcut convolutions, expected " +
                     std::to_string(config.expected_layers));
  }
}

OnnxBackbone::~OnnxBackbone() = default;
OnnxBackbone::OnnxBackbone(OnnxBackbone&&) noexcept = default;
OnnxBackbone& OnnxBackbone::operator=(OnnxBackbone&&) noexcept = default;

int OnnxBackbone::conv_layer_count() const { return static_cast<int>(impl_->graph.captures().size()); }
int OnnxBackbone::class_count() const { return impl_->graph.classifier_classes(); }
std::uint32_t OnnxBackbone::model_hash() const { return impl_->hash; }
const BackboneConfig& OnnxBackbone::config() const { return impl_->config; }

TrunkOutputs OnnxBackbone::run(std::span<const float> chw, int height, int width, Scale scale) {
  if (chw.size() != 3ull * height * width) throw UsageError("input buffer does not match 3 x height x width");
  onnx_rt::Tensor input;
  input.shape = {1, 3, height, width};
  input.data.assign(chw.begin(), chw.end());
  onnx_rt::Graph::Outputs raw;
  try {
    raw = impl_->graph.run(std::move(input));
  } catch (const std::bad_alloc&) {
    throw ModelError("out of memory during inference");
  }

  TrunkOutputs out;
  const auto& captures = impl_->graph.captures();
  out.stacks.reserve(captures.size());
  for (std::size_t i = 0; i < captures.size(); ++i) {
    auto& t = raw.captured[i];
    if (t.shape.size() != 4) throw ModelError("captured convolution output is not 4-D");
    FeatureStack s;
    s.layer_index = captures[i].layer_index;
    s.scale = scale;
    s.count = static_cast<int>(t.shape[1]);
    s.height = static_cast<int>(t.shape[2]);
    s.width = static_cast<int>(t.shape[3]);
    s.data = std::move(t.data);
    out.stacks.push_back(std::move(s));
  }
  auto& fa = raw.final_activation;
  if (fa.shape.size() != 4) throw ModelError("final activation is not 4-D");
  out.final_units = static_cast<int>(fa.shape[1]);
  out.final_height = static_cast<int>(fa.shape[2]);
  out.final_width = static_cast<int>(fa.shape[3]);
  out.final_activation = std::move(fa.data);
  out.logits = std::move(raw.logits.data);
  if (out.final_units != impl_->graph.classifier_units()) {
    throw ModelError("classifier expects " + std::to_string(impl_->graph.classifier_units()) +
                     " units but the final activation has " + std::to_string(out.final_units));
  }
  if (static_cast<int>(out.logits.size()) != impl_->graph.classifier_classes()) {
    throw ModelError("logit count does not match the classifier");
  }
  for (float v : out.logits) {
    if (!std::isfinite(v)) throw ModelError("inference produced non-finite logits");
  }
  return out;
}

FeatureBundle OnnxBackbone::extract_features(const ImageTensor& img) {
  if (img.empty()) throw UsageError("cannot extract features from an empty image");
  const auto& cfg = impl_->config;
  const auto [wh, ww] = working_size(img.height, img.width, cfg);
  const int ch = std::max(1, wh / 2), cw = std::max(1, ww / 2);

  FeatureBundle bundle;
  bundle.source_height = img.height;
  bundle.source_width = img.width;
  bundle.working_height = wh;
  bundle.working_width = ww;

  TrunkOutputs fine = run(to_network_input(resize_bilinear(img, wh, ww), cfg), wh, ww, Scale::fine);
  TrunkOutputs coarse = run(to_network_input(resize_bilinear(img, ch, cw), cfg), ch, cw, Scale::coarse);
  bundle.fine = std::move(fine.stacks);
  bundle.coarse = std::move(coarse.stacks);

  auto& cam = bundle.cam;
  cam.units = fine.final_units;
  cam.height = fine.final_height;
  cam.width = fine.final_width;
  cam.classes = impl_->graph.classifier_classes();
  cam.activations = std::move(fine.final_activation);
  cam.weights = impl_->graph.classifier_weights();
  const auto probs = softmax(fine.logits);
  cam.class_probs.assign(probs.begin(), probs.end());
  bundle.validate();
  return bundle;
}

std::uint32_t crc32_of(std::span<const char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<char> encode_features(const FeatureBundle& bundle) {
  if (bundle.fine.size() != bundle.coarse.size()) throw DataError("fine and coarse layer counts differ");
  detail::ByteWriter w;
  w.bytes("DFB1");
  w.u32(kFeatureFormatVersion);
  w.u32(static_cast<std::uint32_t>(bundle.fine.size()));
  w.u16(2);
  for (const auto* stacks : {&bundle.fine, &bundle.coarse}) {
    for (const auto& s : *stacks) {
      if (s.data.size() != static_cast<std::size_t>(s.count) * s.height * s.width) {
        throw DataError("feature stack size mismatch");
      }
      w.u32(static_cast<std::uint32_t>(s.layer_index));
      w.u32(static_cast<std::uint32_t>(s.count));
      w.u32(static_cast<std::uint32_t>(s.height));
      w.u32(static_cast<std::uint32_t>(s.width));
      w.f32s(std::span<const float>(s.data));
    }
  }
  const auto& cam = bundle.cam;
  w.u32(static_cast<std::uint32_t>(cam.units));
  w.u32(static_cast<std::uint32_t>(cam.height));
  w.u32(static_cast<std::uint32_t>(cam.width));
  w.u32(static_cast<std::uint32_t>(cam.classes));
  w.f32s(std::span<const float>(cam.activations));
  w.f32s(std::span<const float>(cam.weights));
  w.f32s(std::span<const float>(cam.class_probs));
  w.u32(static_cast<std::uint32_t>(bundle.source_height));
  w.u32(static_cast<std::uint32_t>(bundle.source_width));
  w.u32(static_cast<std::uint32_t>(bundle.working_height));
  w.u32(static_cast<std::uint32_t>(bundle.working_width));
  auto& buf = w.buffer();
  const std::uint32_t crc = crc32_of(std::span<const char>(buf).subspan(4));
  w.u32(crc);
  return std::move(buf);
}

FeatureBundle decode_features(std::span<const char> bytes, const std::string& context) {
  if (bytes.size() < 4 || std::string_view(bytes.data(), 4) != "DFB1") throw DataError(context + ": bad magic");
  if (bytes.size() < 8) throw DataError(context + ": truncated payload");
  detail::ByteReader r(bytes.first(bytes.size() - 4), context);
  r.bytes(4);
  const auto version = r.u32();
  if (version != kFeatureFormatVersion) throw DataError(context + ": unsupported version " + std::to_string(version));
  const auto layers = r.u32();
  const auto scales = r.u16();
  if (scales != 2) throw DataError(context + ": expected 2 scales, found " + std::to_string(scales));

  // Sizes are validated against the remaining payload before allocating.
  auto checked_count = [&](std::uint64_t n) {
    if (n > r.remaining() / 4) throw DataError(context + ": truncated payload");
    return static_cast<std::size_t>(n);
  };
  FeatureBundle b;
  for (int s = 0; s < 2; ++s) {
    auto& stacks = s == 0 ? b.fine : b.coarse;
    for (std::uint32_t l = 0; l < layers; ++l) {
      FeatureStack st;
      st.scale = s == 0 ? Scale::fine : Scale::coarse;
      st.layer_index = static_cast<int>(r.u32());
      st.count = static_cast<int>(r.u32());
      st.height = static_cast<int>(r.u32());
      st.width = static_cast<int>(r.u32());
      st.data.resize(checked_count(static_cast<std::uint64_t>(st.count) * st.height * st.width));
      r.f32s(std::span<float>(st.data));
      stacks.push_back(std::move(st));
    }
  }
  auto& cam = b.cam;
  cam.units = static_cast<int>(r.u32());
  cam.height = static_cast<int>(r.u32());
  cam.width = static_cast<int>(r.u32());
  cam.classes = static_cast<int>(r.u32());
  cam.activations.resize(checked_count(static_cast<std::uint64_t>(cam.units) * cam.height * cam.width));
  r.f32s(std::span<float>(cam.activations));
  cam.weights.resize(checked_count(static_cast<std::uint64_t>(cam.units) * cam.classes));
  r.f32s(std::span<float>(cam.weights));
  cam.class_probs.resize(checked_count(cam.classes));
  r.f32s(std::span<float>(cam.class_probs));
  b.source_height = static_cast<int>(r.u32());
  b.source_width = static_cast<int>(r.u32());
  b.working_height = static_cast<int>(r.u32());
  b.working_width = static_cast<int>(r.u32());
  if (r.remaining() != 0) throw DataError(context + ": unexpected trailing bytes");

  detail::ByteReader tail(bytes.last(4), context);
  const std::uint32_t stored = tail.u32();
  if (stored != crc32_of(bytes.subspan(4, bytes.size() - 8))) throw DataError(context + ": checksum mismatch");
  return b;
}

void save_features(const FeatureBundle& bundle, const std::filesystem::path& path) {
  detail::write_file(path, encode_features(bundle));
}

FeatureBundle load_features(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_features(bytes, path.string());
}

FeatureBundle BackboneSource::features(const std::string&, const std::filesystem::path& image_path) {
  return backbone_.extract_features(load_image(image_path));
}

CachedSource::CachedSource(std::unique_ptr<FeatureSource> inner, std::filesystem::path dir,
                           std::uint32_t backbone_hash, int working_long_side)
    : inner_(std::move(inner)), dir_(std::move(dir)), hash_(backbone_hash), long_side_(working_long_side) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path CachedSource::entry_path(const std::string& image_id) const {
  char hex[9];
  std::snprintf(hex, sizeof hex, "%08x", hash_);
  return dir_ / (image_id + "_" + hex + "_" + std::to_string(long_side_) + ".dfb");
}

FeatureBundle CachedSource::features(const std::string& image_id, const std::filesystem::path& image_path) {
  const auto path = entry_path(image_id);
  std::error_code ec;
  if (std::filesystem::is_regular_file(path, ec)) return load_features(path);
  if (!inner_) throw DataError("feature cache miss without a backbone: " + path.string());
  FeatureBundle bundle = inner_->features(image_id, image_path);
  std::ostringstream tmp_name;
  tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id();
  const auto tmp = dir_ / tmp_name.str();
  save_features(bundle, tmp);
  std::filesystem::rename(tmp, path);
  return bundle;
}

}  // namespace deepfeat
