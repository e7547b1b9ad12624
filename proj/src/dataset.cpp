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


#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>

#include "deepfeat/error.hpp"
#include "deepfeat/harness.hpp"

namespace deepfeat {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// id -> path for regular files with one of the given extensions (preference order).
std::map<std::string, fs::path> scan(const fs::path& dir, const std::vector<std::string>& extensions) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw DataError("missing dataset directory: " + dir.string());
  std::map<std::string, fs::path> found;
  std::map<std::string, std::size_t> rank;
  for (const auto& item : fs::directory_iterator(dir)) {
    if (!item.is_regular_file()) continue;
    const auto name = item.path().filename().string();
    if (name.empty() || name[0] == '.') continue;
    const auto ext = lower(item.path().extension().string());
    const auto it = std::find(extensions.begin(), extensions.end(), ext);
    if (it == extensions.end()) continue;
    const auto id = item.path().stem().string();
    const auto r = static_cast<std::size_t>(it - extensions.begin());
    auto [pos, inserted] = rank.emplace(id, r);
    if (!inserted) {
      if (pos->second == r) throw DataError("duplicate id " + id + " in " + dir.string());
      if (r > pos->second) continue;
      pos->second = r;
    }
    found[id] = item.path();
  }
  return found;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_int(std::string_view s, int& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace

std::vector<std::pair<int, int>> read_fixation_points(const fs::path& path, int height, int width) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read fixation points: " + path.string());
  std::string line;
  if (!std::getline(in, line) || lower(std::string(trim(line))) != "x,y") {
    throw DataError(path.string() + ": expected header \"x,y\"");
  }
  std::vector<std::pair<int, int>> points;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto row = trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    int x = 0, y = 0;
    if (comma == std::string_view::npos || !parse_int(row.substr(0, comma), x) ||
        !parse_int(row.substr(comma + 1), y)) {
      throw DataError(path.string() + " row " + std::to_string(line_no) + ": malformed fixation \"" +
                      std::string(row) + "\"");
    }
    if (x < 0 || y < 0 || x >= width || y >= height) {
      throw DataError(path.string() + " row " + std::to_string(line_no) + ": fixation x=" + std::to_string(x) +
                      ", y=" + std::to_string(y) + " outside " + std::to_string(width) + "x" +
                      std::to_string(height) + " image");
    }
    points.emplace_back(x, y);
  }
  if (points.empty()) throw DataError(path.string() + ": no fixations");
  return points;
}

FixationGroundTruth load_ground_truth(const DatasetEntry& entry, int height, int width,
                                      const DatasetOptions& options) {
  FixationGroundTruth gt;
  gt.height = height;
  gt.width = width;
  gt.points.assign(static_cast<std::size_t>(height) * width, 0);
  const auto fixations = read_fixation_points(entry.points, height, width);
  Map2D counts(height, width);
  for (auto [x, y] : fixations) {
    gt.points[static_cast<std::size_t>(y) * width + x] = 1;
    counts(y, x) += 1.0;
  }

  Map2D density;
  if (options.regen_density_sigma > 0.0) {
    density = gaussian_blur(counts, options.regen_density_sigma);
  } else {
    density = load_map(entry.density);
    if (density.height() != height || density.width() != width) {
      throw DataError(entry.density.string() + ": density map is " + std::to_string(density.width()) + "x" +
                      std::to_string(density.height()) + ", image is " + std::to_string(width) + "x" +
                      std::to_string(height));
    }
  }
  double total = 0.0;
  for (double v : density.values()) {
    if (v < 0.0) throw DataError(entry.density.string() + ": negative density value");
    total += v;
  }
  if (!(total > 0.0)) throw DataError("degenerate density map: " + entry.density.string());
  for (double& v : density.values()) v /= total;
  density.set_state(MapState::probability);
  gt.density = std::move(density);
  return gt;
}

DatasetIndex load_dataset(const fs::path& root, const DatasetOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("dataset root is not a directory: " + root.string());
  const auto images = scan(root / "images", {".jpeg", ".jpg", ".png"});
  const auto points = scan(root / "fixations" / "points", {".csv"});
  const auto maps = scan(root / "fixations" / "maps", {".png"});

  std::set<std::string> ids;
  for (const auto* m : {&images, &points, &maps}) {
    for (const auto& kv : *m) ids.insert(kv.first);
  }
  DatasetIndex index;
  index.root = root;
  for (const auto& id : ids) {
    const bool has_image = images.count(id), has_points = points.count(id), has_map = maps.count(id);
    if (!has_image || !has_points || (!has_map && options.regen_density_sigma <= 0.0)) {
      std::string missing;
      if (!has_image) missing += " images/";
      if (!has_points) missing += " fixations/points/";
      if (!has_map) missing += " fixations/maps/";
      throw DataError("id " + id + " missing from:" + missing);
    }
    index.entries.push_back({id, images.at(id), points.at(id), has_map ? maps.at(id) : fs::path()});
  }
  if (index.entries.empty()) throw DataError("dataset has no entries: " + root.string());

  if (options.validate) {
    for (const auto& e : index.entries) {
      const auto img = load_image(e.image);
      (void)load_ground_truth(e, img.height, img.width, options);
    }
  }
  return index;
}

}  // namespace deepfeat
