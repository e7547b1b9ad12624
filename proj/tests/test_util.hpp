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

#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepfeat/imaging.hpp"

namespace dftest {

inline std::filesystem::path data_dir() { return DEEPFEAT_TEST_DATA; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("deepfeat_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct RefTensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

inline RefTensor read_reference(const std::filesystem::path& dir, const std::string& manifest,
                                const std::string& name) {
  std::ifstream in(dir / manifest);
  const auto j = nlohmann::json::parse(in);
  for (const auto& t : j.at("tensors")) {
    if (t.at("name") != name) continue;
    RefTensor r;
    r.shape = t.at("shape").get<std::vector<std::int64_t>>();
    std::int64_t n = 1;
    for (auto d : r.shape) n *= d;
    r.data.resize(static_cast<std::size_t>(n));
    std::ifstream f(dir / t.at("file").get<std::string>(), std::ios::binary);
    f.read(reinterpret_cast<char*>(r.data.data()), n * 4);
    EXPECT_EQ(f.gcount(), n * 4) << name;
    return r;
  }
  ADD_FAILURE() << "reference tensor not found: " << name;
  return {};
}

inline deepfeat::Map2D random_map(std::mt19937_64& rng, int h, int w, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  deepfeat::Map2D m(h, w);
  for (double& v : m.values()) v = u(rng);
  return m;
}

inline deepfeat::Map2D normalized(deepfeat::Map2D m) {
  double s = 0.0;
  for (double v : m.values()) s += v;
  for (double& v : m.values()) v /= s;
  m.set_state(deepfeat::MapState::probability);
  return m;
}

/// Largest |a - b| relative to max(|b|) over the tensor (absolute when b is all zero).
inline double max_rel_error(const std::vector<float>& a, const std::vector<float>& b) {
  double scale = 0.0, err = 0.0;
  for (float v : b) scale = std::max(scale, static_cast<double>(std::abs(v)));
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) err = std::max(err, std::abs(double(a[i]) - b[i]));
  return scale > 0.0 ? err / scale : err;
}

}  // namespace dftest
