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

#include "onnx_graph.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <climits>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <optional>

#include <Eigen/Core>
#include <google/protobuf/io/coded_stream.h>
#include <google/protobuf/io/zero_copy_stream_impl_lite.h>

#include "binary_io.hpp"
#include "deepfeat/error.hpp"
#include "onnx.pb.h"

namespace deepfeat::onnx_rt {

using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::int64_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

namespace {

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

Tensor from_proto(const onnx::TensorProto& t) {
  if (t.data_location() == onnx::TensorProto::EXTERNAL) {
    throw ModelError("tensor '" + t.name() + "' uses external data, which is not supported");
  }
  Tensor out;
  out.shape.assign(t.dims().begin(), t.dims().end());
  const auto n = static_cast<std::size_t>(out.numel());
  const std::string& raw = t.raw_data();
  switch (t.data_type()) {
    case onnx::TensorProto::FLOAT:
      out.data.resize(n);
      if (!raw.empty()) {
        if (raw.size() != 4 * n) throw ModelError("tensor '" + t.name() + "' has inconsistent raw size");
        detail::ByteReader r(std::span<const char>(raw.data(), raw.size()), t.name());
        r.f32s(std::span<float>(out.data));
      } else {
        if (static_cast<std::size_t>(t.float_data_size()) != n) throw ModelError("tensor '" + t.name() + "' size mismatch");
        std::copy(t.float_data().begin(), t.float_data().end(), out.data.begin());
      }
      break;
    case onnx::TensorProto::DOUBLE:
      out.data.resize(n);
      if (!raw.empty()) {
        if (raw.size() != 8 * n) throw ModelError("tensor '" + t.name() + "' has inconsistent raw size");
        for (std::size_t i = 0; i < n; ++i) {
          std::uint64_t bits = 0;
          for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[8 * i + b])) << (8 * b);
          out.data[i] = static_cast<float>(std::bit_cast<double>(bits));
        }
      } else {
        if (static_cast<std::size_t>(t.double_data_size()) != n) throw ModelError("tensor '" + t.name() + "' size mismatch");
        for (std::size_t i = 0; i < n; ++i) out.data[i] = static_cast<float>(t.double_data(static_cast<int>(i)));
      }
      break;
    case onnx::TensorProto::INT64:
      out.is_int = true;
      out.ints.resize(n);
      if (!raw.empty()) {
        if (raw.size() != 8 * n) throw ModelError("tensor '" + t.name() + "' has inconsistent raw size");
        for (std::size_t i = 0; i < n; ++i) {
          std::uint64_t bits = 0;
          for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[8 * i + b])) << (8 * b);
          out.ints[i] = static_cast<std::int64_t>(bits);
        }
      } else {
        if (static_cast<std::size_t>(t.int64_data_size()) != n) throw ModelError("tensor '" + t.name() + "' size mismatch");
        std::copy(t.int64_data().begin(), t.int64_data().end(), out.ints.begin());
      }
      break;
    default:
      throw ModelError("tensor '" + t.name() + "' has unsupported data type " + std::to_string(t.data_type()));
  }
  return out;
}

const onnx::AttributeProto* find_attr(const onnx::NodeProto& n, const std::string& name) {
  for (const auto& a : n.attribute()) {
    if (a.name() == name) return &a;
  }
  return nullptr;
}

std::vector<std::int64_t> attr_ints(const onnx::NodeProto& n, const std::string& name,
                                    std::vector<std::int64_t> fallback = {}) {
  const auto* a = find_attr(n, name);
  if (!a) return fallback;
  return {a->ints().begin(), a->ints().end()};
}

std::int64_t attr_int(const onnx::NodeProto& n, const std::string& name, std::int64_t fallback) {
  const auto* a = find_attr(n, name);
  return a ? a->i() : fallback;
}

float attr_float(const onnx::NodeProto& n, const std::string& name, float fallback) {
  const auto* a = find_attr(n, name);
  return a ? a->f() : fallback;
}

std::optional<Op> op_from(const std::string& type) {
  static const std::map<std::string, Op> table = {
      {"Conv", Op::conv},
      {"BatchNormalization", Op::batch_norm},
      {"Relu", Op::relu},
      {"Add", Op::add},
      {"MaxPool", Op::max_pool},
      {"GlobalAveragePool", Op::global_average_pool},
      {"Flatten", Op::flatten},
      {"Reshape", Op::reshape},
      {"Gemm", Op::gemm},
      {"MatMul", Op::matmul},
      {"Identity", Op::identity},
      {"Softmax", Op::softmax},
  };
  auto it = table.find(type);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

void require_4d(const Tensor& x, const char* op) {
  if (x.shape.size() != 4 || x.shape[0] != 1) {
    throw ModelError(std::string(op) + " expects a [1,C,H,W] input, got " + shape_str(x.shape));
  }
}

// Explicit [top, left, bottom, right] padding for a 2D window op.
std::array<std::int64_t, 4> resolve_pads(const Node& n) {
  if (n.pads.size() == 4) return {n.pads[0], n.pads[1], n.pads[2], n.pads[3]};
  return {0, 0, 0, 0};
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const Node& n) {
  require_4d(x, "Conv");
  if (w.shape.size() != 4) throw ModelError("Conv weights must be 4-D, got " + shape_str(w.shape));
  const std::int64_t C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::int64_t M = w.shape[0], Cg = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  const std::int64_t groups = n.group;
  if (groups < 1 || C != Cg * groups || M % groups != 0) {
    throw ModelError("Conv '" + n.name + "' channel/group mismatch: input " + shape_str(x.shape) + ", weights " +
                     shape_str(w.shape));
  }
  const std::int64_t sh = n.strides.size() == 2 ? n.strides[0] : 1;
  const std::int64_t sw = n.strides.size() == 2 ? n.strides[1] : 1;
  const std::int64_t dh = n.dilations.size() == 2 ? n.dilations[0] : 1;
  const std::int64_t dw = n.dilations.size() == 2 ? n.dilations[1] : 1;
  const auto [pt, pl, pb, pr] = resolve_pads(n);
  const std::int64_t OH = (H + pt + pb - dh * (kh - 1) - 1) / sh + 1;
  const std::int64_t OW = (W + pl + pr - dw * (kw - 1) - 1) / sw + 1;
  if (OH < 1 || OW < 1) throw ModelError("Conv '" + n.name + "' input " + shape_str(x.shape) + " is too small");

  Tensor y;
  y.shape = {1, M, OH, OW};
  y.data.assign(static_cast<std::size_t>(M * OH * OW), 0.0f);
  const std::int64_t Mg = M / groups;
  const std::int64_t K = Cg * kh * kw;
  const std::int64_t P = OH * OW;
  const bool pointwise = kh == 1 && kw == 1 && sh == 1 && sw == 1 && pt == 0 && pl == 0 && pb == 0 && pr == 0;

  std::vector<float> col;
  for (std::int64_t g = 0; g < groups; ++g) {
    const float* in = x.data.data() + g * Cg * H * W;
    const float* colp = in;
    if (!pointwise) {
      col.assign(static_cast<std::size_t>(K * P), 0.0f);
      for (std::int64_t c = 0; c < Cg; ++c) {
        for (std::int64_t ki = 0; ki < kh; ++ki) {
          for (std::int64_t kj = 0; kj < kw; ++kj) {
            float* row = col.data() + ((c * kh + ki) * kw + kj) * P;
            for (std::int64_t oy = 0; oy < OH; ++oy) {
              const std::int64_t iy = oy * sh - pt + ki * dh;
              if (iy < 0 || iy >= H) continue;
              const float* src = in + (c * H + iy) * W;
              float* dst = row + oy * OW;
              for (std::int64_t ox = 0; ox < OW; ++ox) {
                const std::int64_t ix = ox * sw - pl + kj * dw;
                if (ix >= 0 && ix < W) dst[ox] = src[ix];
              }
            }
          }
        }
      }
      colp = col.data();
    }
    Eigen::Map<const RowMajor> wm(w.data.data() + g * Mg * K, Mg, K);
    Eigen::Map<const RowMajor> cm(colp, K, P);
    Eigen::Map<RowMajor> om(y.data.data() + g * Mg * P, Mg, P);
    om.noalias() = wm * cm;
  }
  if (bias) {
    if (bias->numel() != M) throw ModelError("Conv '" + n.name + "' bias length mismatch");
    for (std::int64_t m = 0; m < M; ++m) {
      float* dst = y.data.data() + m * P;
      const float b = bias->data[static_cast<std::size_t>(m)];
      for (std::int64_t i = 0; i < P; ++i) dst[i] += b;
    }
  }
  return y;
}

Tensor max_pool2d(const Tensor& x, const Node& n) {
  require_4d(x, "MaxPool");
  if (n.kernel.size() != 2) throw ModelError("MaxPool '" + n.name + "' needs a 2-D kernel_shape");
  const std::int64_t C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::int64_t kh = n.kernel[0], kw = n.kernel[1];
  const std::int64_t sh = n.strides.size() == 2 ? n.strides[0] : 1;
  const std::int64_t sw = n.strides.size() == 2 ? n.strides[1] : 1;
  const std::int64_t dh = n.dilations.size() == 2 ? n.dilations[0] : 1;
  const std::int64_t dw = n.dilations.size() == 2 ? n.dilations[1] : 1;
  const auto [pt, pl, pb, pr] = resolve_pads(n);
  auto out_dim = [&](std::int64_t in, std::int64_t pa, std::int64_t pz, std::int64_t k, std::int64_t s,
                     std::int64_t d) {
    const std::int64_t span = in + pa + pz - d * (k - 1) - 1;
    std::int64_t o = (n.ceil_mode ? (span + s - 1) / s : span / s) + 1;
    // a window may not start in the trailing padding
    if (n.ceil_mode && (o - 1) * s >= in + pa) --o;
    return o;
  };
  const std::int64_t OH = out_dim(H, pt, pb, kh, sh, dh);
  const std::int64_t OW = out_dim(W, pl, pr, kw, sw, dw);
  if (OH < 1 || OW < 1) throw ModelError("MaxPool '" + n.name + "' input too small");
  Tensor y;
  y.shape = {1, C, OH, OW};
  y.data.resize(static_cast<std::size_t>(C * OH * OW));
  for (std::int64_t c = 0; c < C; ++c) {
    const float* src = x.data.data() + c * H * W;
    float* dst = y.data.data() + c * OH * OW;
    for (std::int64_t oy = 0; oy < OH; ++oy) {
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::int64_t ki = 0; ki < kh; ++ki) {
          const std::int64_t iy = oy * sh - pt + ki * dh;
          if (iy < 0 || iy >= H) continue;
          for (std::int64_t kj = 0; kj < kw; ++kj) {
            const std::int64_t ix = ox * sw - pl + kj * dw;
            if (ix >= 0 && ix < W) best = std::max(best, src[iy * W + ix]);
          }
        }
        dst[oy * OW + ox] = best;
      }
    }
  }
  return y;
}

Tensor batch_norm(const Tensor& x, const Tensor& scale, const Tensor& shift, const Tensor& mean, const Tensor& var,
                  float epsilon) {
  if (x.shape.size() < 2) throw ModelError("BatchNormalization input must have a channel axis");
  const std::int64_t C = x.shape[1];
  if (scale.numel() != C || shift.numel() != C || mean.numel() != C || var.numel() != C) {
    throw ModelError("BatchNormalization parameter length mismatch");
  }
  const std::int64_t inner = x.numel() / (x.shape[0] * C);
  Tensor y = x;
  for (std::int64_t c = 0; c < C; ++c) {
    const float a = scale.data[c] / std::sqrt(var.data[c] + epsilon);
    const float b = shift.data[c] - a * mean.data[c];
    float* p = y.data.data() + c * inner;
    for (std::int64_t i = 0; i < inner; ++i) p[i] = a * p[i] + b;
  }
  return y;
}

Tensor add_broadcast(const Tensor& a, const Tensor& b) {
  if (a.shape == b.shape) {
    Tensor y = a;
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
    return y;
  }
  const std::size_t rank = std::max(a.shape.size(), b.shape.size());
  auto padded = [rank](const std::vector<std::int64_t>& s) {
    std::vector<std::int64_t> p(rank - s.size(), 1);
    p.insert(p.end(), s.begin(), s.end());
    return p;
  };
  const auto sa = padded(a.shape), sb = padded(b.shape);
  Tensor y;
  y.shape.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (sa[i] != sb[i] && sa[i] != 1 && sb[i] != 1) {
      throw ModelError("Add cannot broadcast " + shape_str(a.shape) + " with " + shape_str(b.shape));
    }
    y.shape[i] = std::max(sa[i], sb[i]);
  }
  auto strides_of = [rank](const std::vector<std::int64_t>& s) {
    std::vector<std::int64_t> st(rank, 0);
    std::int64_t acc = 1;
    for (std::size_t i = rank; i-- > 0;) {
      st[i] = s[i] == 1 ? 0 : acc;
      acc *= s[i];
    }
    return st;
  };
  const auto ta = strides_of(sa), tb = strides_of(sb);
  y.data.resize(static_cast<std::size_t>(y.numel()));
  std::vector<std::int64_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < y.data.size(); ++flat) {
    std::int64_t oa = 0, ob = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      oa += idx[d] * ta[d];
      ob += idx[d] * tb[d];
    }
    y.data[flat] = a.data[oa] + b.data[ob];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < y.shape[d]) break;
      idx[d] = 0;
    }
  }
  return y;
}

namespace {

Tensor matmul_2d(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b, float alpha) {
  if (a.shape.size() != 2 || b.shape.size() != 2) throw ModelError("Gemm/MatMul expects 2-D operands");
  const std::int64_t M = trans_a ? a.shape[1] : a.shape[0];
  const std::int64_t K = trans_a ? a.shape[0] : a.shape[1];
  const std::int64_t Kb = trans_b ? b.shape[1] : b.shape[0];
  const std::int64_t N = trans_b ? b.shape[0] : b.shape[1];
  if (K != Kb) throw ModelError("Gemm/MatMul inner dimension mismatch " + shape_str(a.shape) + " x " + shape_str(b.shape));
  Eigen::Map<const RowMajor> am(a.data.data(), a.shape[0], a.shape[1]);
  Eigen::Map<const RowMajor> bm(b.data.data(), b.shape[0], b.shape[1]);
  Tensor y;
  y.shape = {M, N};
  y.data.resize(static_cast<std::size_t>(M * N));
  Eigen::Map<RowMajor> ym(y.data.data(), M, N);
  // accumulate in double: classifier outputs feed a softmax over many classes
  Eigen::MatrixXd ad = am.cast<double>(), bd = bm.cast<double>();
  if (trans_a) ad.transposeInPlace();
  if (trans_b) bd.transposeInPlace();
  ym = (alpha * (ad * bd)).cast<float>();
  return y;
}

Tensor reshape_to(const Tensor& x, const std::vector<std::int64_t>& target) {
  std::vector<std::int64_t> shape(target.size());
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0) {
      if (i >= x.shape.size()) throw ModelError("Reshape copies a missing dimension");
      shape[i] = x.shape[i];
    } else if (target[i] == -1) {
      if (infer >= 0) throw ModelError("Reshape has more than one -1");
      infer = static_cast<int>(i);
      continue;
    } else {
      shape[i] = target[i];
    }
    known *= shape[i];
  }
  if (infer >= 0) {
    if (known == 0 || x.numel() % known != 0) throw ModelError("Reshape cannot infer dimension");
    shape[infer] = x.numel() / known;
  }
  Tensor y;
  y.shape = std::move(shape);
  if (y.numel() != x.numel()) throw ModelError("Reshape size mismatch " + shape_str(x.shape) + " -> " + shape_str(y.shape));
  y.data = x.data;
  return y;
}

Tensor softmax_from(const Tensor& x, std::int64_t axis) {
  const auto rank = static_cast<std::int64_t>(x.shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ModelError("Softmax axis out of range");
  std::int64_t inner = 1;
  for (std::int64_t i = axis; i < rank; ++i) inner *= x.shape[i];
  Tensor y = x;
  for (std::int64_t o = 0; o < x.numel() / inner; ++o) {
    float* p = y.data.data() + o * inner;
    const float mx = *std::max_element(p, p + inner);
    double total = 0.0;
    for (std::int64_t i = 0; i < inner; ++i) total += std::exp(static_cast<double>(p[i]) - mx);
    for (std::int64_t i = 0; i < inner; ++i) p[i] = static_cast<float>(std::exp(static_cast<double>(p[i]) - mx) / total);
  }
  return y;
}

}  // namespace

Graph Graph::load(const std::filesystem::path& path) {
  std::vector<char> bytes;
  try {
    bytes = detail::read_file(path);
  } catch (const DataError&) {
    throw ModelError("model file missing or unreadable: " + path.string());
  }
  return parse(bytes, path.string());
}

Graph Graph::parse(std::span<const char> bytes, const std::string& context) {
  onnx::ModelProto model;
  {
    google::protobuf::io::ArrayInputStream raw(bytes.data(), static_cast<int>(bytes.size()));
    google::protobuf::io::CodedInputStream coded(&raw);
    coded.SetTotalBytesLimit(INT_MAX);
    if (bytes.empty() || !model.ParseFromCodedStream(&coded) || !model.has_graph()) {
      throw ModelError("malformed ONNX model: " + context);
    }
  }
  const onnx::GraphProto& g = model.graph();
  Graph out;
  std::map<std::string, int> ids;
  auto new_value = [&](const std::string& name) {
    const int id = static_cast<int>(out.value_names_.size());
    out.value_names_.push_back(name);
    out.constants_.emplace_back();
    out.is_constant_.push_back(false);
    ids[name] = id;
    return id;
  };
  auto lookup = [&](const std::string& name) {
    auto it = ids.find(name);
    if (it == ids.end()) throw ModelError("model references undefined tensor '" + name + "'");
    return it->second;
  };

  for (const auto& init : g.initializer()) {
    const int id = new_value(init.name());
    out.constants_[id] = from_proto(init);
    out.is_constant_[id] = true;
  }
  for (const auto& in : g.input()) {
    if (ids.count(in.name())) continue;
    if (out.input_value_ >= 0) throw ModelError("model has more than one non-constant input");
    out.input_value_ = new_value(in.name());
  }
  if (out.input_value_ < 0) throw ModelError("model has no data input");

  for (const auto& np : g.node()) {
    if (np.op_type() == "Constant") {
      const auto* v = find_attr(np, "value");
      if (!v || !v->has_t() || np.output_size() != 1) throw ModelError("unsupported Constant node '" + np.name() + "'");
      const int id = new_value(np.output(0));
      out.constants_[id] = from_proto(v->t());
      out.is_constant_[id] = true;
      continue;
    }
    const auto op = op_from(np.op_type());
    if (!op) throw ModelError("unsupported operator '" + np.op_type() + "' in node '" + np.name() + "'");
    if (np.output_size() < 1) throw ModelError("node '" + np.name() + "' has no output");
    if (*op == Op::identity) {
      ids[np.output(0)] = lookup(np.input(0));
      continue;
    }
    Node n;
    n.op = *op;
    n.name = np.name().empty() ? np.output(0) : np.name();
    for (const auto& in : np.input()) n.inputs.push_back(in.empty() ? -1 : lookup(in));
    switch (n.op) {
      case Op::conv:
      case Op::max_pool: {
        n.kernel = attr_ints(np, "kernel_shape");
        n.strides = attr_ints(np, "strides");
        n.pads = attr_ints(np, "pads");
        n.dilations = attr_ints(np, "dilations");
        n.group = attr_int(np, "group", 1);
        n.ceil_mode = attr_int(np, "ceil_mode", 0) != 0;
        if (const auto* ap = find_attr(np, "auto_pad"); ap && ap->s() != "NOTSET" && ap->s() != "VALID") {
          throw ModelError("auto_pad=" + ap->s() + " is not supported (node '" + n.name + "')");
        }
        if (!n.pads.empty() && n.pads.size() != 4) throw ModelError("node '" + n.name + "' is not 2-D");
        if (n.op == Op::max_pool && attr_int(np, "storage_order", 0) != 0) {
          throw ModelError("MaxPool storage_order is not supported");
        }
        if (n.op == Op::max_pool && np.output_size() > 1 && !np.output(1).empty()) {
          throw ModelError("MaxPool indices output is not supported");
        }
        if (n.op == Op::conv && (n.inputs.size() < 2 || n.inputs[1] < 0 || !out.is_constant_[n.inputs[1]])) {
          throw ModelError("Conv '" + n.name + "' needs constant weights");
        }
        break;
      }
      case Op::batch_norm:
        n.epsilon = attr_float(np, "epsilon", 1e-5f);
        if (attr_int(np, "training_mode", 0) != 0) throw ModelError("BatchNormalization in training mode");
        if (n.inputs.size() != 5) throw ModelError("BatchNormalization '" + n.name + "' needs 5 inputs");
        for (int i = 1; i < 5; ++i) {
          if (!out.is_constant_[n.inputs[i]]) throw ModelError("BatchNormalization parameters must be constant");
        }
        break;
      case Op::flatten:
        n.axis = attr_int(np, "axis", 1);
        break;
      case Op::softmax:
        n.axis = attr_int(np, "axis", model.opset_import_size() && model.opset_import(0).version() < 13 ? 1 : -1);
        break;
      case Op::gemm:
        n.alpha = attr_float(np, "alpha", 1.0f);
        n.beta = attr_float(np, "beta", 1.0f);
        n.trans_a = attr_int(np, "transA", 0) != 0;
        n.trans_b = attr_int(np, "transB", 0) != 0;
        break;
      case Op::reshape:
        if (n.inputs.size() < 2 || !out.is_constant_[n.inputs[1]] || !out.constants_[n.inputs[1]].is_int) {
          throw ModelError("Reshape '" + n.name + "' needs a constant int64 shape");
        }
        break;
      default:
        break;
    }
    n.output = new_value(np.output(0));
    out.nodes_.push_back(std::move(n));
  }
  if (g.output_size() < 1) throw ModelError("model has no output");
  out.logits_value_ = lookup(g.output(0).name());
  out.analyze();
  return out;
}

void Graph::analyze() {
  const int nvalues = static_cast<int>(value_names_.size());
  std::vector<int> producer(nvalues, -1);
  std::vector<std::vector<int>> consumers(nvalues);
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    producer[nodes_[i].output] = i;
    for (int v : nodes_[i].inputs) {
      if (v >= 0) consumers[v].push_back(i);
    }
  }

  // logits: graph output, stepping over a trailing Softmax
  if (producer[logits_value_] >= 0 && nodes_[producer[logits_value_]].op == Op::softmax) {
    logits_value_ = nodes_[producer[logits_value_]].inputs[0];
  }

  // classifier
  const int head = producer[logits_value_];
  if (head < 0) throw ModelError("classifier layer not found");
  const Tensor* weights = nullptr;
  bool transposed = false;
  const Node& hn = nodes_[head];
  auto constant = [&](int v) -> const Tensor* { return v >= 0 && is_constant_[v] ? &constants_[v] : nullptr; };
  if (hn.op == Op::gemm) {
    if (hn.trans_a) throw ModelError("classifier Gemm with transA is not supported");
    weights = constant(hn.inputs[1]);
    transposed = hn.trans_b;
  } else if (hn.op == Op::matmul) {
    weights = constant(hn.inputs[1]);
  } else if (hn.op == Op::add) {
    for (int v : hn.inputs) {
      const int p = producer[v];
      if (p >= 0 && nodes_[p].op == Op::matmul) weights = constant(nodes_[p].inputs[1]);
    }
  }
  if (!weights || weights->shape.size() != 2) throw ModelError("classifier layer not found");
  classifier_units_ = static_cast<int>(transposed ? weights->shape[1] : weights->shape[0]);
  classifier_classes_ = static_cast<int>(transposed ? weights->shape[0] : weights->shape[1]);
  classifier_weights_.resize(static_cast<std::size_t>(classifier_units_) * classifier_classes_);
  for (int k = 0; k < classifier_units_; ++k) {
    for (int c = 0; c < classifier_classes_; ++c) {
      classifier_weights_[static_cast<std::size_t>(k) * classifier_classes_ + c] =
          transposed ? weights->data[static_cast<std::size_t>(c) * classifier_units_ + k]
                     : weights->data[static_cast<std::size_t>(k) * classifier_classes_ + c];
    }
  }

  // final activation: the tensor entering global average pooling
  for (const Node& n : nodes_) {
    if (n.op != Op::global_average_pool) continue;
    if (final_activation_value_ >= 0) throw ModelError("model has more than one global average pool");
    final_activation_value_ = n.inputs[0];
  }
  if (final_activation_value_ < 0) throw ModelError("model has no global average pool before the classifier");

  // convolution depth of every value
  std::vector<int> depth(nvalues, 0);
  for (const Node& n : nodes_) {
    int d = 0;
    for (int v : n.inputs) {
      if (v >= 0 && !is_constant_[v]) d = std::max(d, depth[v]);
    }
    depth[n.output] = d + (n.op == Op::conv ? 1 : 0);
  }
  auto conv_behind = [&](int v) {
    int p = producer[v];
    while (p >= 0 && nodes_[p].op == Op::batch_norm) p = producer[nodes_[p].inputs[0]];
    return p >= 0 && nodes_[p].op == Op::conv ? p : -1;
  };
  // Projection shortcuts: of two convolution branches meeting at an Add, the
  // one with fewer convolutions behind it.
  std::vector<bool> shortcut(nodes_.size(), false);
  for (const Node& n : nodes_) {
    if (n.op != Op::add || n.inputs.size() != 2) continue;
    const int a = conv_behind(n.inputs[0]), b = conv_behind(n.inputs[1]);
    if (a < 0 || b < 0) continue;
    const int da = depth[n.inputs[0]], db = depth[n.inputs[1]];
    if (da < db) shortcut[a] = true;
    if (db < da) shortcut[b] = true;
  }

  int layer = 0;
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (nodes_[i].op != Op::conv || shortcut[i]) continue;
    int v = nodes_[i].output;
    if (consumers[v].size() == 1 && nodes_[consumers[v][0]].op == Op::batch_norm &&
        nodes_[consumers[v][0]].inputs[0] == v) {
      v = nodes_[consumers[v][0]].output;
    }
    captures_.push_back({v, ++layer});
  }

  last_use_.assign(nvalues, -1);
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    for (int v : nodes_[i].inputs) {
      if (v >= 0) last_use_[v] = i;
    }
  }
}

Graph::Outputs Graph::run(Tensor input) const {
  if (input.shape.size() != 4 || input.shape[0] != 1) throw ModelError("input must be [1,C,H,W]");
  std::vector<Tensor> values(value_names_.size());
  std::vector<int> capture_slot(value_names_.size(), -1);
  for (std::size_t i = 0; i < captures_.size(); ++i) capture_slot[captures_[i].value] = static_cast<int>(i);

  Outputs out;
  out.captured.resize(captures_.size());
  auto get = [&](int v) -> const Tensor& {
    if (is_constant_[v]) return constants_[v];
    return values[v];
  };
  auto publish = [&](int v) {
    if (capture_slot[v] >= 0) out.captured[capture_slot[v]] = values[v];
    if (v == final_activation_value_) out.final_activation = values[v];
    if (v == logits_value_) out.logits = values[v];
  };
  values[input_value_] = std::move(input);
  publish(input_value_);

  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    const Node& n = nodes_[i];
    const Tensor& x = get(n.inputs[0]);
    Tensor y;
    switch (n.op) {
      case Op::conv:
        y = conv2d(x, get(n.inputs[1]), n.inputs.size() > 2 && n.inputs[2] >= 0 ? &get(n.inputs[2]) : nullptr, n);
        break;
      case Op::batch_norm:
        y = batch_norm(x, get(n.inputs[1]), get(n.inputs[2]), get(n.inputs[3]), get(n.inputs[4]), n.epsilon);
        break;
      case Op::relu:
        y = x;
        for (float& v : y.data) v = std::max(v, 0.0f);
        break;
      case Op::add:
        y = add_broadcast(x, get(n.inputs[1]));
        break;
      case Op::max_pool:
        y = max_pool2d(x, n);
        break;
      case Op::global_average_pool: {
        require_4d(x, "GlobalAveragePool");
        const std::int64_t C = x.shape[1], hw = x.shape[2] * x.shape[3];
        y.shape = {1, C, 1, 1};
        y.data.resize(static_cast<std::size_t>(C));
        for (std::int64_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < hw; ++j) acc += x.data[c * hw + j];
          y.data[c] = static_cast<float>(acc / hw);
        }
        break;
      }
      case Op::flatten: {
        std::int64_t axis = n.axis < 0 ? n.axis + static_cast<std::int64_t>(x.shape.size()) : n.axis;
        std::int64_t outer = 1;
        for (std::int64_t d = 0; d < axis; ++d) outer *= x.shape[d];
        y.shape = {outer, x.numel() / outer};
        y.data = x.data;
        break;
      }
      case Op::reshape:
        y = reshape_to(x, get(n.inputs[1]).ints);
        break;
      case Op::gemm: {
        y = matmul_2d(x, get(n.inputs[1]), n.trans_a, n.trans_b, n.alpha);
        if (n.inputs.size() > 2 && n.inputs[2] >= 0) {
          Tensor c = get(n.inputs[2]);
          for (float& v : c.data) v *= n.beta;
          y = add_broadcast(y, c);
        }
        break;
      }
      case Op::matmul:
        y = matmul_2d(x, get(n.inputs[1]), false, false, 1.0f);
        break;
      case Op::softmax:
        y = softmax_from(x, n.axis);
        break;
      case Op::identity:
        y = x;
        break;
    }
    values[n.output] = std::move(y);
    publish(n.output);
    for (int v : n.inputs) {
      if (v >= 0 && !is_constant_[v] && last_use_[v] == i) values[v] = Tensor{};
    }
  }
  if (out.logits.data.empty()) throw ModelError("inference produced no logits");
  if (out.final_activation.data.empty()) throw ModelError("inference produced no final activation");
  return out;
}

}  // namespace deepfeat::onnx_rt
