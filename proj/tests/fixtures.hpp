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


// Synthetic fixation datasets built from the bundled test images, and a
// lightweight feature source that needs no model.

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "deepfeat/backbone.hpp"
#include "deepfeat/error.hpp"
#include "deepfeat/harness.hpp"
#include "test_util.hpp"

namespace dftest {

inline const std::vector<std::string>& image_names() {
  static const std::vector<std::string> names{"astronaut.png", "camera.png", "chelsea.png", "coffee.jpg",
                                              "rocket.png"};
  return names;
}

inline std::uint64_t id_seed(const std::string& id) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : id) h = (h ^ c) * 1099511628211ull;
  return h;
}

/// Writes <root>/images, fixations/points and fixations/maps for the first
/// `count` bundled images. Fixations cluster around an off-center spot with
/// some uniform scatter; densities are blurred fixation counts as 8-bit PNGs.
inline void make_dataset(const std::filesystem::path& root, std::size_t count = 5) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "images");
  fs::create_directories(root / "fixations" / "points");
  fs::create_directories(root / "fixations" / "maps");
  for (std::size_t i = 0; i < count && i < image_names().size(); ++i) {
    const auto& name = image_names()[i];
    const fs::path src = data_dir() / "images" / name;
    const std::string id = fs::path(name).stem().string();
    fs::copy_file(src, root / "images" / name, fs::copy_options::overwrite_existing);
    const auto img = deepfeat::load_image(src);
    std::mt19937_64 rng(id_seed(id));
    std::normal_distribution<double> nx(img.width * 0.55, img.width * 0.12), ny(img.height * 0.45, img.height * 0.12);
    std::uniform_int_distribution<int> ux(0, img.width - 1), uy(0, img.height - 1);
    std::ofstream csv(root / "fixations" / "points" / (id + ".csv"));
    csv << "x,y\n";
    deepfeat::Map2D counts(img.height, img.width);
    for (int f = 0; f < 40; ++f) {
      int x, y;
      if (f % 4 == 3) {
        x = ux(rng);
        y = uy(rng);
      } else {
        x = std::clamp(static_cast<int>(std::lround(nx(rng))), 0, img.width - 1);
        y = std::clamp(static_cast<int>(std::lround(ny(rng))), 0, img.height - 1);
      }
      csv << x << "," << y << "\n";
      counts(y, x) += 1.0;
    }
    const auto blurred = deepfeat::minmax_normalize(deepfeat::gaussian_blur(counts, 4.0));
    deepfeat::save_png(blurred, root / "fixations" / "maps" / (id + ".png"));
  }
}

/// Deterministic pseudo-features derived from the image id; fails for ids in `failing`.
class FakeSource : public deepfeat::FeatureSource {
 public:
  explicit FakeSource(std::vector<std::string> failing = {}) : failing_(std::move(failing)) {}

  deepfeat::FeatureBundle features(const std::string& id, const std::filesystem::path& image_path) override {
    using namespace deepfeat;
    if (std::find(failing_.begin(), failing_.end(), id) != failing_.end()) {
      throw DataError("simulated extraction failure for " + id);
    }
    const auto img = load_image(image_path);
    std::mt19937_64 rng(id_seed(id));
    std::normal_distribution<float> n(0.0f, 1.0f);
    FeatureBundle b;
    b.source_height = img.height;
    b.source_width = img.width;
    b.working_height = 32;
    b.working_width = 48;
    const int sizes[][2] = {{16, 24}, {8, 12}, {4, 6}};
    for (int l = 1; l <= 3; ++l) {
      for (Scale s : {Scale::fine, Scale::coarse}) {
        FeatureStack st;
        st.layer_index = l;
        st.scale = s;
        st.count = 2;
        st.height = sizes[l - 1][0] / (s == Scale::fine ? 1 : 2);
        st.width = sizes[l - 1][1] / (s == Scale::fine ? 1 : 2);
        st.data.resize(static_cast<std::size_t>(st.count) * st.height * st.width);
        for (float& v : st.data) v = n(rng);
        (s == Scale::fine ? b.fine : b.coarse).push_back(std::move(st));
      }
    }
    auto& cam = b.cam;
    cam.units = 4;
    cam.classes = 6;
    cam.height = 2;
    cam.width = 3;
    cam.activations.resize(24);
    cam.weights.resize(24);
    for (float& v : cam.activations) v = std::abs(n(rng));
    for (float& v : cam.weights) v = n(rng);
    std::vector<float> logits(6);
    for (float& v : logits) v = n(rng);
    const auto p = softmax(logits);
    cam.class_probs.assign(p.begin(), p.end());
    return b;
  }

 private:
  std::vector<std::string> failing_;
};

inline deepfeat::SourceFactory fake_factory(std::vector<std::string> failing = {}) {
  return [failing] { return std::make_unique<FakeSource>(failing); };
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace dftest
