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

#include "deepfeat/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "binary_io.hpp"
#include "deepfeat/error.hpp"

namespace deepfeat {

namespace detail {

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("read failed: " + path.string());
  return data;
}

void write_file(const std::filesystem::path& path, std::span<const char> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace detail

ImageTensor::ImageTensor(int h, int w, int c, float fill)
    : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

Map2D::Map2D(int height, int width, double fill, MapState state)
    : height_(height), width_(width), values_(static_cast<std::size_t>(height) * width, fill), state_(state) {
  if (height < 0 || width < 0) throw UsageError("negative map dimensions");
  if (state != MapState::raw) set_state(state);
}

Map2D::Map2D(int height, int width, std::vector<double> values, MapState state)
    : height_(height), width_(width), values_(std::move(values)), state_(state) {
  if (height < 0 || width < 0 || values_.size() != static_cast<std::size_t>(height) * width) {
    throw UsageError("map data length does not match " + std::to_string(height) + "x" + std::to_string(width));
  }
  if (state != MapState::raw) set_state(state);
}

void Map2D::set_state(MapState state) {
  if (!satisfies_state(values_, state)) throw DataError("map values violate the requested state");
  state_ = state;
}

bool satisfies_state(std::span<const double> values, MapState state) {
  switch (state) {
    case MapState::raw:
      return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
    case MapState::unit:
      return std::all_of(values.begin(), values.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
    case MapState::probability: {
      double total = 0.0;
      for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) return false;
        total += v;
      }
      return std::abs(total - 1.0) <= kProbabilitySumTolerance;
    }
  }
  return false;
}

namespace {

enum class Container { png, jpeg, dfm1, unknown };

Container sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  unsigned char head[8] = {};
  in.read(reinterpret_cast<char*>(head), sizeof head);
  const auto got = in.gcount();
  if (got >= 8 && head[0] == 0x89 && head[1] == 'P' && head[2] == 'N' && head[3] == 'G') return Container::png;
  if (got >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF) return Container::jpeg;
  if (got >= 4 && std::equal(head, head + 4, "DFM1")) return Container::dfm1;
  return Container::unknown;
}

cv::Mat decode(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_IGNORE_ORIENTATION);
  if (m.empty()) throw DataError("cannot decode " + path.string());
  if (m.rows == 0 || m.cols == 0) throw DataError("zero-dimension image: " + path.string());
  if (m.depth() != CV_8U && m.depth() != CV_16U) throw DataError("unsupported sample depth: " + path.string());
  return m;
}

double depth_scale(const cv::Mat& m) { return m.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0; }

double sample(const cv::Mat& m, int y, int x, int c) {
  if (m.depth() == CV_16U) return m.ptr<std::uint16_t>(y)[x * m.channels() + c];
  return m.ptr<std::uint8_t>(y)[x * m.channels() + c];
}

template <typename T>
void resize_plane(std::span<const T> in, int in_h, int in_w, std::span<T> out, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw UsageError("resize target dimensions must be >= 1");
  if (in_h < 1 || in_w < 1 || in.size() != static_cast<std::size_t>(in_h) * in_w) {
    throw UsageError("resize input must be non-empty");
  }
  if (out.size() != static_cast<std::size_t>(out_h) * out_w) throw UsageError("resize output buffer size mismatch");
  if (in_h == out_h && in_w == out_w) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }

  struct Tap {
    int i0, i1;
    T frac;
  };
  auto taps = [](int in_n, int out_n) {
    std::vector<Tap> t(out_n);
    const double scale = static_cast<double>(in_n) / out_n;
    for (int d = 0; d < out_n; ++d) {
      double src = (d + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
      const int i0 = static_cast<int>(std::floor(src));
      t[d] = {i0, std::min(i0 + 1, in_n - 1), static_cast<T>(src - i0)};
    }
    return t;
  };
  // v0 + f (v1 - v0) keeps constant runs exact; the clamp keeps results inside [v0, v1].
  auto lerp = [](T v0, T v1, T f) {
    const T v = v0 + f * (v1 - v0);
    return std::clamp(v, std::min(v0, v1), std::max(v0, v1));
  };

  const auto ty = taps(in_h, out_h);
  const auto tx = taps(in_w, out_w);
  std::vector<T> row0(out_w), row1(out_w);
  auto horizontal = [&](int y, std::vector<T>& row) {
    const T* src = in.data() + static_cast<std::size_t>(y) * in_w;
    for (int x = 0; x < out_w; ++x) row[x] = lerp(src[tx[x].i0], src[tx[x].i1], tx[x].frac);
  };
  int cached0 = -1, cached1 = -1;
  for (int y = 0; y < out_h; ++y) {
    const Tap& t = ty[y];
    if (cached0 != t.i0) {
      if (cached1 == t.i0) {
        std::swap(row0, row1);
        std::swap(cached0, cached1);
      } else {
        horizontal(t.i0, row0);
        cached0 = t.i0;
      }
    }
    if (cached1 != t.i1) {
      horizontal(t.i1, row1);
      cached1 = t.i1;
    }
    T* dst = out.data() + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) dst[x] = lerp(row0[x], row1[x], t.frac);
  }
}

}  // namespace

ImageTensor load_image(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw DataError("unreadable file: " + path.string());
  const Container kind = sniff(path);
  if (kind != Container::png && kind != Container::jpeg) {
    throw DataError("unsupported image format (expected PNG or JPEG): " + path.string());
  }
  const cv::Mat m = decode(path);
  const int src_channels = m.channels();
  const int channels = src_channels >= 3 ? 3 : 1;
  const double scale = depth_scale(m);
  ImageTensor img(m.rows, m.cols, channels);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      if (channels == 3) {
        // OpenCV stores BGR(A)
        img.at(y, x, 0) = static_cast<float>(sample(m, y, x, 2) * scale);
        img.at(y, x, 1) = static_cast<float>(sample(m, y, x, 1) * scale);
        img.at(y, x, 2) = static_cast<float>(sample(m, y, x, 0) * scale);
      } else {
        img.at(y, x, 0) = static_cast<float>(sample(m, y, x, 0) * scale);
      }
    }
  }
  return img;
}

void resize_bilinear(std::span<const float> in, int in_h, int in_w, std::span<float> out, int out_h, int out_w) {
  resize_plane<float>(in, in_h, in_w, out, out_h, out_w);
}

void resize_bilinear(std::span<const double> in, int in_h, int in_w, std::span<double> out, int out_h,
                     int out_w) {
  resize_plane<double>(in, in_h, in_w, out, out_h, out_w);
}

Map2D resize_bilinear(const Map2D& m, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw UsageError("resize target dimensions must be >= 1");
  if (m.empty()) throw UsageError("resize input must be non-empty");
  if (out_h == m.height() && out_w == m.width()) return m;
  Map2D out(out_h, out_w);
  resize_plane<double>(m.values(), m.height(), m.width(), out.values(), out_h, out_w);
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw UsageError("resize target dimensions must be >= 1");
  if (img.empty()) throw UsageError("resize input must be non-empty");
  if (out_h == img.height && out_w == img.width) return img;
  ImageTensor out(out_h, out_w, img.channels);
  const std::size_t in_px = static_cast<std::size_t>(img.height) * img.width;
  const std::size_t out_px = static_cast<std::size_t>(out_h) * out_w;
  std::vector<float> plane(in_px), resized(out_px);
  for (int c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < in_px; ++i) plane[i] = img.data[i * img.channels + c];
    resize_plane<float>(plane, img.height, img.width, resized, out_h, out_w);
    for (std::size_t i = 0; i < out_px; ++i) out.data[i * img.channels + c] = resized[i];
  }
  return out;
}

Map2D minmax_normalize(const Map2D& m) {
  if (m.empty()) throw UsageError("cannot normalize an empty map");
  auto vals = m.values();
  if (!std::all_of(vals.begin(), vals.end(), [](double v) { return std::isfinite(v); })) {
    throw DataError("cannot normalize a map with non-finite values");
  }
  const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
  const double lo = *lo_it, hi = *hi_it;
  Map2D out(m.height(), m.width(), 0.0, MapState::unit);
  if (hi == lo) return out;
  const double range = hi - lo;
  auto dst = out.values();
  for (std::size_t i = 0; i < vals.size(); ++i) dst[i] = std::clamp((vals[i] - lo) / range, 0.0, 1.0);
  return out;
}

Map2D gaussian_center_map(int h, int w, double sigma_frac) {
  if (h < 1 || w < 1) throw UsageError("center map dimensions must be >= 1");
  if (!(sigma_frac > 0.0) || !std::isfinite(sigma_frac)) throw UsageError("sigma_frac must be positive");
  const double sigma = sigma_frac * std::max(h, w);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double denom = 2.0 * sigma * sigma;
  Map2D out(h, w, 0.0, MapState::unit);
  for (int y = 0; y < h; ++y) {
    const double dy = y - cy;
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      out(y, x) = std::exp(-(dx * dx + dy * dy) / denom);
    }
  }
  return out;
}

Map2D gaussian_blur(const Map2D& m, double sigma) {
  if (!(sigma > 0.0)) throw UsageError("blur sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) ksum += kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (double& k : kernel) k /= ksum;

  const int h = m.height(), w = m.width();
  Map2D tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * m(y, std::clamp(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(std::clamp(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  }
  return out;
}

void save_png(const Map2D& m, const std::filesystem::path& path) {
  if (m.empty()) throw UsageError("cannot save an empty map");
  const Map2D unit = m.state() == MapState::unit ? m : minmax_normalize(m);
  cv::Mat img(unit.height(), unit.width(), CV_8UC1);
  for (int y = 0; y < unit.height(); ++y) {
    auto* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < unit.width(); ++x) {
      row[x] = static_cast<std::uint8_t>(std::clamp(std::floor(unit(y, x) * 255.0 + 0.5), 0.0, 255.0));
    }
  }
  if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
}

void write_raw_map(const Map2D& m, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes("DFM1");
  w.u32(static_cast<std::uint32_t>(m.height()));
  w.u32(static_cast<std::uint32_t>(m.width()));
  w.f32s(m.values());
  detail::write_file(path, w.buffer());
}

Map2D read_raw_map(const std::filesystem::path& path) {
  const auto data = detail::read_file(path);
  detail::ByteReader r(data, path.string());
  if (data.size() < 4 || r.bytes(4) != "DFM1") throw DataError(path.string() + ": bad magic");
  const auto h = r.u32();
  const auto w = r.u32();
  if (h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20)) throw DataError(path.string() + ": bad dimensions");
  if (r.remaining() != 4ull * h * w) {
    throw DataError(path.string() + (r.remaining() < 4ull * h * w ? ": truncated payload" : ": trailing bytes"));
  }
  Map2D m(static_cast<int>(h), static_cast<int>(w));
  r.f32s(m.values());
  for (double v : m.values()) {
    if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value");
  }
  return m;
}

Map2D load_map(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw DataError("unreadable file: " + path.string());
  const Container kind = sniff(path);
  if (kind == Container::dfm1) return read_raw_map(path);
  if (kind == Container::unknown) throw DataError("unsupported map format: " + path.string());
  const cv::Mat m = decode(path);
  const int channels = std::min(m.channels(), 3);
  const double scale = depth_scale(m);
  Map2D out(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      double acc = 0.0;
      for (int c = 0; c < channels; ++c) acc += sample(m, y, x, c);
      out(y, x) = acc / channels * scale;
    }
  }
  return out;
}

}  // namespace deepfeat
