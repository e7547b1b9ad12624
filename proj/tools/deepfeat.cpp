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


// deepfeat command line: predict, evaluate, compare, features, cache.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <new>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "deepfeat/backbone.hpp"
#include "deepfeat/bottomup.hpp"
#include "deepfeat/error.hpp"
#include "deepfeat/fusion.hpp"
#include "deepfeat/harness.hpp"
#include "deepfeat/imaging.hpp"
#include "deepfeat/topdown.hpp"

namespace fs = std::filesystem;
using namespace deepfeat;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kModel = 3 };

struct BackboneArgs {
  std::string model;
  int working_side = 448;
  int expect_layers = 49;

  void add(CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--model", model, "ONNX residual classifier");
    if (required) opt->required();
    cmd->add_option("--working-side", working_side, "long side of the fine working resolution")->capture_default_str();
    cmd->add_option("--expect-layers", expect_layers, "required number of captured conv layers (0: any)")
        ->capture_default_str();
  }
  BackboneConfig config() const {
    BackboneConfig c;
    c.working_long_side = working_side;
    c.expected_layers = expect_layers;
    return c;
  }
};

struct FusionArgs {
  FusionConfig cfg;
  void add(CLI::App* cmd) {
    cmd->add_option("--alpha", cfg.alpha, "bottom-up weight")->capture_default_str();
    cmd->add_option("--beta", cfg.beta, "center-bias weight")->capture_default_str();
    cmd->add_option("--sigma-frac", cfg.sigma_frac, "center Gaussian sigma over the longer side")->capture_default_str();
    cmd->add_option("--top-classes", cfg.top_classes, "keep only the most probable classes (0: all)")
        ->capture_default_str();
  }
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, sep);) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<Variant> parse_variants(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "all") return {kAllVariants.begin(), kAllVariants.end()};
  std::vector<Variant> out;
  for (const auto& item : split(s, ',')) {
    const Variant v = parse_variant(item);
    if (std::find(out.begin(), out.end(), v) != out.end()) throw UsageError("variant listed twice: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("no variants given");
  return out;
}

SourceFactory make_factory(const BackboneArgs& args, const std::string& cache_dir) {
  const BackboneConfig cfg = args.config();
  const fs::path model = args.model;
  // Fail early on an unloadable model, before any worker starts.
  const std::uint32_t hash = OnnxBackbone(model, cfg).model_hash();
  return [=]() -> std::unique_ptr<FeatureSource> {
    auto inner = std::make_unique<BackboneSource>(OnnxBackbone(model, cfg));
    if (cache_dir.empty()) return inner;
    return std::make_unique<CachedSource>(std::move(inner), cache_dir, hash, cfg.working_long_side);
  };
}

FeatureBundle bundle_for_image(const BackboneArgs& args, const std::string& features, const fs::path& image) {
  if (!features.empty()) return load_features(features);
  if (args.model.empty()) throw UsageError("either --model or --features is required");
  OnnxBackbone backbone(args.model, args.config());
  return backbone.extract_features(load_image(image));
}

void write_map_pair(const Map2D& m, const fs::path& stem) {
  save_png(m, stem.string() + ".png");
  write_raw_map(m, stem.string() + ".dfm");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepFeat saliency prediction and evaluation"};
  app.require_subcommand(1);

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "saliency map for one image");
  BackboneArgs predict_bb;
  FusionArgs predict_fu;
  std::string predict_image, predict_variant = "wcb", predict_png, predict_raw, predict_features;
  predict_cmd->add_option("--image", predict_image, "input image")->required();
  predict_bb.add(predict_cmd, false);
  predict_fu.add(predict_cmd);
  predict_cmd->add_option("--variant", predict_variant, "wcb|ncb|td|bu")->capture_default_str();
  predict_cmd->add_option("--features", predict_features, "DFB1 container to use instead of running the model");
  predict_cmd->add_option("--out-png", predict_png, "8-bit PNG output");
  predict_cmd->add_option("--out-raw", predict_raw, "DFM1 float32 output");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score the model variants on a fixation dataset");
  BackboneArgs eval_bb;
  FusionArgs eval_fu;
  EvaluationConfig eval_cfg;
  std::string eval_dataset, eval_variants = "all", eval_cache, eval_out, eval_dump;
  eval_cmd->add_option("--dataset", eval_dataset, "dataset root")->required();
  eval_bb.add(eval_cmd, true);
  eval_fu.add(eval_cmd);
  eval_cmd->add_option("--variants", eval_variants, "all or a comma list of wcb,ncb,td,bu")->capture_default_str();
  eval_cmd->add_option("--seed", eval_cfg.metric.rng_seed, "seed for the Borji negatives")->capture_default_str();
  eval_cmd->add_option("--splits", eval_cfg.metric.borji_splits, "Borji splits per image")->capture_default_str();
  eval_cmd->add_option("--workers", eval_cfg.workers, "worker threads")->capture_default_str();
  eval_cmd->add_option("--cache", eval_cache, "feature cache directory");
  eval_cmd->add_option("--dump-maps", eval_dump, "write every predicted map as <dir>/<variant>/<id>.dfm");
  eval_cmd->add_option("--regen-density-sigma", eval_cfg.dataset.regen_density_sigma,
                       "rebuild densities from points with this sigma in pixels (0: use provided maps)");
  eval_cmd->add_flag("--all-pairs", eval_cfg.all_pairs, "t-tests between all model pairs");
  eval_cmd->add_option("--out", eval_out, "report directory")->required();

  // compare
  auto* cmp_cmd = app.add_subcommand("compare", "rank the model against external saliency maps");
  BackboneArgs cmp_bb;
  FusionArgs cmp_fu;
  EvaluationConfig cmp_cfg;
  std::string cmp_dataset, cmp_variants = "wcb", cmp_cache, cmp_out;
  std::vector<std::string> cmp_external;
  cmp_cmd->add_option("--dataset", cmp_dataset, "dataset root")->required();
  cmp_bb.add(cmp_cmd, true);
  cmp_fu.add(cmp_cmd);
  cmp_cmd->add_option("--variants", cmp_variants, "variants to include")->capture_default_str();
  cmp_cmd->add_option("--external", cmp_external, "NAME=DIR of per-image maps")->required();
  cmp_cmd->add_option("--seed", cmp_cfg.metric.rng_seed, "seed for the Borji negatives")->capture_default_str();
  cmp_cmd->add_option("--splits", cmp_cfg.metric.borji_splits, "Borji splits per image")->capture_default_str();
  cmp_cmd->add_option("--workers", cmp_cfg.workers, "worker threads")->capture_default_str();
  cmp_cmd->add_option("--cache", cmp_cache, "feature cache directory");
  cmp_cmd->add_option("--regen-density-sigma", cmp_cfg.dataset.regen_density_sigma,
                      "rebuild densities from points with this sigma in pixels");
  cmp_cmd->add_flag("--all-pairs", cmp_cfg.all_pairs, "t-tests between all model pairs");
  cmp_cmd->add_option("--out", cmp_out, "report directory")->required();

  // features
  auto* feat_cmd = app.add_subcommand("features", "dump per-layer and class activation maps");
  BackboneArgs feat_bb;
  FusionArgs feat_fu;
  std::string feat_image, feat_layers = "1,10,20,30,40,49", feat_out, feat_features;
  int feat_cam = -1;
  feat_cmd->add_option("--image", feat_image, "input image")->required();
  feat_bb.add(feat_cmd, false);
  feat_fu.add(feat_cmd);
  feat_cmd->add_option("--features", feat_features, "DFB1 container to use instead of running the model");
  feat_cmd->add_option("--layers", feat_layers, "comma list of 1-based layer indices")->capture_default_str();
  feat_cmd->add_option("--cam", feat_cam, "class for the single-class activation map (default: most probable)");
  feat_cmd->add_option("--out", feat_out, "output directory")->required();

  // cache
  auto* cache_cmd = app.add_subcommand("cache", "pre-extract features for a dataset");
  BackboneArgs cache_bb;
  std::string cache_dataset, cache_out;
  int cache_workers = 1;
  cache_cmd->add_option("--dataset", cache_dataset, "dataset root")->required();
  cache_bb.add(cache_cmd, true);
  cache_cmd->add_option("--workers", cache_workers, "worker threads")->capture_default_str();
  cache_cmd->add_option("--out", cache_out, "cache directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*predict_cmd) {
      predict_fu.cfg.validate();
      if (predict_png.empty() && predict_raw.empty()) throw UsageError("give --out-png and/or --out-raw");
      const Variant variant = parse_variant(predict_variant);
      const FeatureBundle bundle = bundle_for_image(predict_bb, predict_features, predict_image);
      const Map2D sal = predict(bundle, variant, predict_fu.cfg, bundle.source_height, bundle.source_width);
      if (!predict_png.empty()) save_png(sal, predict_png);
      if (!predict_raw.empty()) write_raw_map(sal, predict_raw);
    } else if (*eval_cmd) {
      eval_cfg.fusion = eval_fu.cfg;
      eval_cfg.variants = parse_variants(eval_variants);
      eval_cfg.dump_dir = eval_dump;
      eval_cfg.validate();
      const auto dataset = load_dataset(eval_dataset, eval_cfg.dataset);
      const auto result = evaluate_variants(dataset, make_factory(eval_bb, eval_cache), eval_cfg);
      emit_report(result.reports, result.tests, eval_out);
      std::cerr << "evaluated " << result.reports.front().rows.size() << " images, skipped "
                << result.skipped.size() << "\n";
    } else if (*cmp_cmd) {
      cmp_cfg.fusion = cmp_fu.cfg;
      cmp_cfg.variants = parse_variants(cmp_variants);
      cmp_cfg.validate();
      std::vector<std::pair<std::string, fs::path>> externals;
      for (const auto& spec : cmp_external) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
          throw UsageError("--external expects NAME=DIR, got " + spec);
        }
        externals.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
      }
      auto dataset = load_dataset(cmp_dataset, cmp_cfg.dataset);
      auto result = evaluate_variants(dataset, make_factory(cmp_bb, cmp_cache), cmp_cfg);
      // externals are scored on the images the model could process
      std::erase_if(dataset.entries, [&](const DatasetEntry& e) {
        return std::find(result.skipped.begin(), result.skipped.end(), e.id) != result.skipped.end();
      });
      for (const auto& [name, dir] : externals) {
        for (const auto& r : result.reports) {
          if (r.model == name) throw UsageError("model name used twice: " + name);
        }
        result.reports.push_back(evaluate_external(dataset, dir, name, cmp_cfg));
      }
      emit_report(result.reports, ranked_tests(result.reports, cmp_cfg.all_pairs), cmp_out);
    } else if (*feat_cmd) {
      feat_fu.cfg.validate();
      const FeatureBundle bundle = bundle_for_image(feat_bb, feat_features, feat_image);
      fs::create_directories(feat_out);
      const fs::path out = feat_out;
      std::vector<int> layers;
      for (const auto& item : split(feat_layers, ',')) {
        int v = 0;
        try {
          v = std::stoi(item);
        } catch (const std::exception&) {
          throw UsageError("bad layer index: " + item);
        }
        if (v < 1 || v > static_cast<int>(bundle.layer_count())) {
          throw UsageError("layer " + item + " outside 1.." + std::to_string(bundle.layer_count()));
        }
        layers.push_back(v);
      }
      for (int l : layers) {
        const auto r = center_surround(bundle.fine[l - 1], bundle.coarse[l - 1]);
        write_map_pair(minmax_normalize(r.map), out / ("layer_" + std::to_string(l)));
      }
      int cls = feat_cam;
      const auto& probs = bundle.cam.class_probs;
      if (cls < 0) cls = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      write_map_pair(minmax_normalize(class_activation_map(bundle.cam, cls)), out / ("cam_" + std::to_string(cls)));
      const auto parts = compute_components(bundle, feat_fu.cfg);
      write_map_pair(minmax_normalize(parts.bottom_up), out / "bottom_up");
      write_map_pair(minmax_normalize(parts.top_down), out / "top_down");
      write_map_pair(parts.center, out / "center");
      for (Variant v : kAllVariants) {
        auto name = variant_name(v);
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
        write_map_pair(predict(parts, v, feat_fu.cfg, bundle.source_height, bundle.source_width), out / name);
      }
    } else if (*cache_cmd) {
      DatasetOptions opts;
      opts.validate = false;
      const auto dataset = load_dataset(cache_dataset, opts);
      const auto factory = make_factory(cache_bb, cache_out);
      std::size_t failures = 0;
      std::vector<std::thread> threads;
      std::atomic<std::size_t> next{0};
      std::mutex mutex;
      std::exception_ptr fatal;
      const int workers = std::max(1, std::min<int>(cache_workers, static_cast<int>(dataset.entries.size())));
      for (int t = 0; t < workers; ++t) {
        threads.emplace_back([&] {
          try {
            auto source = factory();
            for (std::size_t i; (i = next.fetch_add(1)) < dataset.entries.size();) {
              const auto& e = dataset.entries[i];
              try {
                (void)source->features(e.id, e.image);
              } catch (const DataError& err) {
                std::lock_guard lock(mutex);
                std::cerr << "warning: " << e.id << ": " << err.what() << "\n";
                ++failures;
              }
            }
          } catch (...) {
            std::lock_guard lock(mutex);
            if (!fatal) fatal = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      if (fatal) std::rethrow_exception(fatal);
      std::cerr << "cached " << dataset.entries.size() - failures << " of " << dataset.entries.size() << " images\n";
      if (failures) return kData;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kModel;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::bad_alloc&) {
    std::cerr << "error: out of memory\n";
    return kModel;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kModel;
  }
  return kOk;
}
