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


#include <cmath>
#include <random>

#include "deepfeat/bottomup.hpp"
#include "deepfeat/error.hpp"
#include "deepfeat/fusion.hpp"
#include "deepfeat/topdown.hpp"
#include "test_util.hpp"

using namespace deepfeat;

namespace {

FeatureStack stack(int layer, Scale s, int k, int h, int w, std::vector<float> data) {
  FeatureStack st;
  st.layer_index = layer;
  st.scale = s;
  st.count = k;
  st.height = h;
  st.width = w;
  st.data = std::move(data);
  return st;
}

FeatureStack random_stack(std::mt19937_64& rng, int layer, Scale s, int k, int h, int w) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> d(static_cast<std::size_t>(k) * h * w);
  for (float& v : d) v = n(rng);
  return stack(layer, s, k, h, w, std::move(d));
}

ClassActivationInputs random_cam(std::mt19937_64& rng, int k, int classes, int h, int w) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  ClassActivationInputs in;
  in.units = k;
  in.classes = classes;
  in.height = h;
  in.width = w;
  in.activations.resize(static_cast<std::size_t>(k) * h * w);
  in.weights.resize(static_cast<std::size_t>(k) * classes);
  for (float& v : in.activations) v = std::abs(n(rng));
  for (float& v : in.weights) v = n(rng);
  std::vector<float> logits(classes);
  for (float& v : logits) v = 2.0f * n(rng);
  const auto p = softmax(logits);
  in.class_probs.assign(p.begin(), p.end());
  return in;
}

// Literal probability-weighted sum over every class of every CAM.
Map2D topdown_oracle(const ClassActivationInputs& in) {
  Map2D out(in.height, in.width);
  for (int c = 0; c < in.classes; ++c) {
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) {
        double cam = 0.0;
        for (int k = 0; k < in.units; ++k) {
          cam += static_cast<double>(in.weight(k, c)) * in.activation(k)[static_cast<std::size_t>(y) * in.width + x];
        }
        out(y, x) += in.class_probs[c] * cam;
      }
    }
  }
  return out;
}

FeatureBundle random_bundle(std::mt19937_64& rng, int layers) {
  FeatureBundle b;
  const int sizes[][2] = {{16, 24}, {8, 12}, {4, 6}};
  for (int l = 1; l <= layers; ++l) {
    const auto* s = sizes[(l - 1) % 3];
    b.fine.push_back(random_stack(rng, l, Scale::fine, 3, s[0], s[1]));
    b.coarse.push_back(random_stack(rng, l, Scale::coarse, 3, s[0] / 2, s[1] / 2));
  }
  b.cam = random_cam(rng, 5, 7, 4, 6);
  b.working_height = 32;
  b.working_width = 48;
  b.source_height = 30;
  b.source_width = 50;
  return b;
}

}  // namespace

// --- bottom-up ---

TEST(CenterSurround, IdenticalScalesGiveZero) {
  std::mt19937_64 rng(1);
  auto fine = random_stack(rng, 1, Scale::fine, 2, 3, 4);
  auto coarse = fine;
  coarse.scale = Scale::coarse;
  const auto r = center_surround(fine, coarse);
  for (double v : r.map.values()) EXPECT_EQ(v, 0.0);
}

TEST(CenterSurround, HandExample) {
  const auto r = center_surround(stack(1, Scale::fine, 1, 2, 2, {1, 0, 0, 1}), stack(1, Scale::coarse, 1, 1, 1, {0.5f}));
  for (double v : r.map.values()) EXPECT_DOUBLE_EQ(v, 0.5);
  EXPECT_EQ(r.layer_index, 1);
}

TEST(CenterSurround, MatchesLoopedReference) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto fine = random_stack(rng, 3, Scale::fine, 2, 6, 8);
    const auto coarse = random_stack(rng, 3, Scale::coarse, 2, 3, 4);
    const auto r = center_surround(fine, coarse);
    Map2D expect(6, 8);
    for (int i = 0; i < 2; ++i) {
      std::vector<float> up(48);
      resize_bilinear(coarse.map(i), 3, 4, up, 6, 8);
      for (int p = 0; p < 48; ++p) expect[p] += std::abs(static_cast<double>(fine.map(i)[p]) - up[p]);
    }
    for (int p = 0; p < 48; ++p) EXPECT_NEAR(r.map[p], expect[p], 1e-12);
    // sign symmetry
    auto nf = fine, nc = coarse;
    for (float& v : nf.data) v = -v;
    for (float& v : nc.data) v = -v;
    const auto rn = center_surround(nf, nc);
    for (int p = 0; p < 48; ++p) EXPECT_EQ(rn.map[p], r.map[p]);
  }
}

TEST(CenterSurround, Errors) {
  std::mt19937_64 rng(3);
  const auto fine = random_stack(rng, 1, Scale::fine, 2, 4, 4);
  EXPECT_THROW(center_surround(fine, random_stack(rng, 2, Scale::coarse, 2, 2, 2)), UsageError);
  EXPECT_THROW(center_surround(fine, random_stack(rng, 1, Scale::coarse, 3, 2, 2)), UsageError);
  EXPECT_THROW(center_surround(fine, random_stack(rng, 1, Scale::fine, 2, 2, 2)), UsageError);
}

TEST(CombineLayers, Examples) {
  std::mt19937_64 rng(4);
  const auto m = dftest::random_map(rng, 5, 6, 0, 3);
  const LayerResponse one{1, m};
  const auto single = combine_layers(std::span(&one, 1), 5, 6);
  const auto norm = minmax_normalize(m);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(single[i], norm[i]);

  const std::vector<LayerResponse> two{{1, m}, {2, m}};
  const auto doubled = combine_layers(two, 5, 6);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_DOUBLE_EQ(doubled[i], 2.0 * norm[i]);

  const std::vector<LayerResponse> with_constant{{1, m}, {2, Map2D(5, 6, 4.0)}};
  const auto c = combine_layers(with_constant, 5, 6);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(c[i], norm[i]);

  EXPECT_THROW(combine_layers(std::span<const LayerResponse>(), 5, 6), UsageError);
}

TEST(CombineLayers, OrderIndependentAndBounded) {
  std::mt19937_64 rng(5);
  std::vector<LayerResponse> rs;
  for (int l = 1; l <= 6; ++l) rs.push_back({l, dftest::random_map(rng, 2 + l, 3 + l)});
  const auto a = combine_layers(rs, 9, 11);
  std::reverse(rs.begin(), rs.end());
  std::swap(rs[1], rs[4]);
  const auto b = combine_layers(rs, 9, 11);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_GE(a[i], 0.0);
    EXPECT_LE(a[i], 6.0);
  }
}

TEST(BottomUp, MatchesComposition) {
  std::mt19937_64 rng(6);
  const auto b = random_bundle(rng, 5);
  const auto direct = bottomup_map(b, 32, 48);
  const auto composed = combine_layers(layer_responses(b), 32, 48);
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_EQ(direct[i], composed[i]);
}

// --- top-down ---

TEST(Cam, Examples) {
  ClassActivationInputs in;
  in.units = 2;
  in.classes = 2;
  in.height = in.width = 2;
  in.activations = {1, 0, 0, 0, 0, 0, 0, 1};
  in.weights = {2, 0, -1, 0};  // unit-major: w[0][0]=2, w[0][1]=0, w[1][0]=-1, w[1][1]=0
  in.class_probs = {0.5f, 0.5f};
  const auto cam = class_activation_map(in, 0);
  EXPECT_EQ(cam(0, 0), 2.0);
  EXPECT_EQ(cam(1, 1), -1.0);
  EXPECT_EQ(cam(0, 1), 0.0);
  const auto zero = class_activation_map(in, 1);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(class_activation_map(in, 2), UsageError);
  EXPECT_THROW(class_activation_map(in, -1), UsageError);
}

TEST(TopDown, ConvexCombinationExample) {
  ClassActivationInputs in;
  in.units = 2;
  in.classes = 2;
  in.height = 1;
  in.width = 2;
  in.activations = {1, 0, 0, 1};
  in.weights = {2, 0, 0, 2};
  in.class_probs = {0.5f, 0.5f};
  const auto m = topdown_map(in, 1, 2);
  EXPECT_DOUBLE_EQ(m[0], 1.0);
  EXPECT_DOUBLE_EQ(m[1], 1.0);
}

TEST(TopDown, OneHotEqualsCam) {
  std::mt19937_64 rng(7);
  auto in = random_cam(rng, 4, 5, 3, 3);
  in.class_probs.assign(5, 0.0f);
  in.class_probs[3] = 1.0f;
  const auto m = topdown_map(in, 3, 3);
  const auto cam = class_activation_map(in, 3);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m[i], cam[i], 1e-12);
}

TEST(TopDown, WeightCollapseMatchesDoubleSum) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = random_cam(rng, 8, 16, 7, 7);
    const auto fast = topdown_map(in, 7, 7);
    const auto slow = topdown_oracle(in);
    double scale = 0.0;
    for (double v : slow.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_LE(std::abs(fast[i] - slow[i]), 1e-4 * scale);
  }
}

TEST(TopDown, LinearInProbabilitiesAndBounded) {
  std::mt19937_64 rng(9);
  auto p = random_cam(rng, 4, 6, 5, 5);
  auto q = p;
  std::vector<float> logits(6);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (float& v : logits) v = n(rng);
  const auto qp = softmax(logits);
  q.class_probs.assign(qp.begin(), qp.end());
  const double lambda = 0.3;
  auto mix = p;
  for (int c = 0; c < 6; ++c) mix.class_probs[c] = static_cast<float>(lambda * p.class_probs[c] + (1 - lambda) * q.class_probs[c]);
  const auto mp = topdown_map(p, 5, 5), mq = topdown_map(q, 5, 5), mm = topdown_map(mix, 5, 5);
  for (std::size_t i = 0; i < mm.size(); ++i) EXPECT_NEAR(mm[i], lambda * mp[i] + (1 - lambda) * mq[i], 1e-5);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      double lo = 1e300, hi = -1e300;
      for (int c = 0; c < 6; ++c) {
        const double v = class_activation_map(p, c)(y, x);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      EXPECT_GE(mp(y, x), lo - 1e-9);
      EXPECT_LE(mp(y, x), hi + 1e-9);
    }
  }
}

TEST(TopDown, TopClassesKeepsMostProbable) {
  std::mt19937_64 rng(10);
  const auto in = random_cam(rng, 3, 5, 4, 4);
  const int best = static_cast<int>(std::max_element(in.class_probs.begin(), in.class_probs.end()) -
                                    in.class_probs.begin());
  const auto m = topdown_map(in, 4, 4, 1);
  const auto cam = class_activation_map(in, best);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(m[i], cam[i], 1e-9);
  const auto all = topdown_map(in, 4, 4, 0), five = topdown_map(in, 4, 4, 5);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(all[i], five[i], 1e-9);
}

// --- fusion ---

TEST(Fuse, Examples) {
  std::mt19937_64 rng(11);
  const auto m = dftest::random_map(rng, 4, 4, -3, 5);
  const auto y = fuse(m, m, 0.5);
  const auto u = minmax_normalize(m);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], u[i], 1e-15);

  const auto td = dftest::random_map(rng, 4, 4, 0, 9);
  const auto y1 = fuse(m, td, 1.0), y0 = fuse(m, td, 0.0);
  const auto utd = minmax_normalize(td);
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_EQ(y1[i], u[i]);
    EXPECT_EQ(y0[i], utd[i]);
  }

  const auto mid = fuse(Map2D(1, 2, std::vector<double>{1, 0}), Map2D(1, 2, std::vector<double>{0, 1}), 0.5);
  EXPECT_EQ(mid[0], 0.5);
  EXPECT_EQ(mid[1], 0.5);
  EXPECT_THROW(fuse(Map2D(1, 2), Map2D(2, 1), 0.5), UsageError);
}

TEST(CenterBias, Examples) {
  const Map2D y(1, 1, std::vector<double>{0.2});
  const Map2D c(1, 1, std::vector<double>{1.0}, MapState::unit);
  EXPECT_DOUBLE_EQ(apply_center_bias(y, c, 0.5)[0], 0.6);
  EXPECT_EQ(apply_center_bias(y, c, 0.0)[0], 0.2);
  EXPECT_EQ(apply_center_bias(y, c, 1.0)[0], 1.0);
  EXPECT_THROW(apply_center_bias(y, Map2D(1, 1, std::vector<double>{2.0}), 0.5), UsageError);
}

TEST(ToProbability, Examples) {
  const auto u = to_probability(Map2D(3, 4, 7.5));
  for (double v : u.values()) EXPECT_NEAR(v, 1.0 / 12.0, 1e-15);
  const auto p = to_probability(Map2D(1, 2, std::vector<double>{0.0, std::log(3.0)}));
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  EXPECT_EQ(p.state(), MapState::probability);
}

TEST(ToProbability, ShiftInvariantAndArgmaxPreserving) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = dftest::random_map(rng, 6, 7, -5, 5);
    Map2D shifted = m;
    for (double& v : shifted.values()) v += 100.0;
    const auto a = to_probability(m), b = to_probability(shifted);
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(a[i], b[i], 1e-9);
      total += a[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
    const auto arg = [](const Map2D& x) {
      return std::max_element(x.values().begin(), x.values().end()) - x.values().begin();
    };
    EXPECT_EQ(arg(a), arg(m));
  }
}

TEST(Predict, VariantEndpointsAndContract) {
  std::mt19937_64 rng(13);
  const auto b = random_bundle(rng, 4);
  const auto parts = compute_components(b, FusionConfig{});
  for (Variant v : kAllVariants) {
    const auto s = predict(parts, v, FusionConfig{}, b.source_height, b.source_width);
    EXPECT_EQ(s.height(), b.source_height);
    EXPECT_EQ(s.width(), b.source_width);
    EXPECT_EQ(s.state(), MapState::probability);
    double total = 0.0;
    for (double x : s.values()) total += x;
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
  FusionConfig no_bias;
  no_bias.beta = 0.0;
  const auto wcb = predict(parts, Variant::wcb, no_bias, 30, 50);
  const auto ncb = predict(parts, Variant::ncb, no_bias, 30, 50);
  FusionConfig bu_only;
  bu_only.alpha = 1.0;
  const auto ncb1 = predict(parts, Variant::ncb, bu_only, 30, 50);
  const auto bu = predict(parts, Variant::bu, bu_only, 30, 50);
  for (std::size_t i = 0; i < wcb.size(); ++i) {
    EXPECT_NEAR(wcb[i], ncb[i], 1e-9);
    EXPECT_NEAR(ncb1[i], bu[i], 1e-9);
  }
}

TEST(Variant, Names) {
  EXPECT_EQ(variant_name(parse_variant("wcb")), "WCB");
  EXPECT_EQ(parse_variant("Ncb"), Variant::ncb);
  EXPECT_THROW(parse_variant("xyz"), UsageError);
  FusionConfig bad;
  bad.alpha = 1.5;
  EXPECT_THROW(bad.validate(), UsageError);
}
