#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "introspect3d/core/rng.hpp"
#include "introspect3d/core/tensor.hpp"
#include "introspect3d/geom/bev.hpp"
#include "introspect3d/io/tensor_store.hpp"

namespace i3d::scene {

namespace fs = std::filesystem;

/// Difficulty knobs for the synthetic BEV scene generator. Defaults are tuned
/// so the toy detector hits some objects and misses others.
struct SceneConfig {
  double x_min = -32.0, x_max = 32.0;
  double y_min = -32.0, y_max = 32.0;
  int n_objects_min = 2;
  int n_objects_max = 7;
  int points_per_object_base = 80;
  int ground_points = 120;
  double sparsity_decay = 0.012;   // per-metre linear point dropout
  double occlusion_prob = 0.35;    // chance an object loses 60..100% of its points
  int clutter_noise_points = 40;
  double min_object_gap = 9.0;     // min centre-to-centre distance, metres
  double obj_size_min = 2.5;
  double obj_size_max = 5.5;

  void validate() const {
    if (!(x_max > x_min) || !(y_max > y_min))
      throw std::invalid_argument("SceneConfig: degenerate bounds");
    if (n_objects_min < 0 || n_objects_max < n_objects_min)
      throw std::invalid_argument("SceneConfig: bad n_objects range");
    if (occlusion_prob < 0.0 || occlusion_prob > 1.0)
      throw std::invalid_argument("SceneConfig: occlusion_prob outside [0,1]");
    if (sparsity_decay < 0.0) throw std::invalid_argument("SceneConfig: negative sparsity_decay");
    if (points_per_object_base < 0 || ground_points < 0 || clutter_noise_points < 0)
      throw std::invalid_argument("SceneConfig: negative point counts");
    if (!(obj_size_max >= obj_size_min) || obj_size_min <= 0.0)
      throw std::invalid_argument("SceneConfig: bad object size range");
  }
};

/// One synthetic LiDAR frame. `points` is N×3 (x, y, intensity).
struct PointCloudScene {
  Tensor<float> points{std::vector<std::size_t>{}};
  std::vector<BevBox> gt_boxes;
  std::vector<int> planned_points;  // per box, before thinning
  std::vector<int> kept_points;     // per box, after sparsity + occlusion
  std::string scene_id;
  std::uint64_t seed = 0;
};

namespace detail {

struct Pt {
  float x, y, intensity;
};

// Point dropout grows linearly with range: keep probability
// max(0, 1 - decay * distance_to_origin). Pure arithmetic so the dataset is
// bit-reproducible across implementations of the documented PRNG.
inline double keep_probability(double x, double y, double decay) {
  const double d = std::sqrt(x * x + y * y);
  return std::clamp(1.0 - decay * d, 0.0, 1.0);
}

}  // namespace detail

/// Deterministic pure function of (config, seed). Objects are sampled as
/// axis-aligned boxes with min-gap rejection, their surface points on an
/// inner shell of the box perimeter; range sparsity and occlusion dropout
/// thin the points; ground sprinkle and clustered clutter are added last.
inline PointCloudScene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  PointCloudScene scene;
  scene.seed = seed;
  scene.scene_id = "s" + std::to_string(seed);

  const int n_obj = static_cast<int>(rng.uniform_int(
      static_cast<std::uint64_t>(cfg.n_objects_min), static_cast<std::uint64_t>(cfg.n_objects_max)));

  // Placement: rejection sampling against the min-gap constraint.
  const double margin = 0.5 * cfg.obj_size_max + 0.5;
  for (int i = 0; i < n_obj; ++i) {
    BevBox box;
    box.w = rng.uniform(cfg.obj_size_min, cfg.obj_size_max);
    box.l = rng.uniform(cfg.obj_size_min, cfg.obj_size_max);
    box.class_id = 0;
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      box.cx = rng.uniform(cfg.x_min + margin, cfg.x_max - margin);
      box.cy = rng.uniform(cfg.y_min + margin, cfg.y_max - margin);
      placed = true;
      for (const auto& other : scene.gt_boxes) {
        const double dx = box.cx - other.cx, dy = box.cy - other.cy;
        if (dx * dx + dy * dy < cfg.min_object_gap * cfg.min_object_gap) {
          placed = false;
          break;
        }
      }
    }
    if (placed) scene.gt_boxes.push_back(box);
  }

  std::vector<detail::Pt> pts;
  pts.reserve(static_cast<std::size_t>(scene.gt_boxes.size()) * cfg.points_per_object_base +
              cfg.ground_points + cfg.clutter_noise_points);

  // Object surface points: perimeter position + inward offset, all inside the box.
  for (const auto& box : scene.gt_boxes) {
    const bool occluded = rng.bernoulli(cfg.occlusion_prob);
    const double drop_frac = occluded ? rng.uniform(0.6, 1.0) : 0.0;
    int kept = 0;
    const double per = 2.0 * (box.w + box.l);
    for (int k = 0; k < cfg.points_per_object_base; ++k) {
      const double s = rng.uniform(0.0, per);
      const double inward = rng.uniform(0.02, 0.30);
      double x, y;
      if (s < box.w) {  // bottom edge
        x = box.x_min() + s;
        y = box.y_min() + inward;
      } else if (s < box.w + box.l) {  // right edge
        x = box.x_max() - inward;
        y = box.y_min() + (s - box.w);
      } else if (s < 2.0 * box.w + box.l) {  // top edge
        x = box.x_min() + (s - box.w - box.l);
        y = box.y_max() - inward;
      } else {  // left edge
        x = box.x_min() + inward;
        y = box.y_min() + (s - 2.0 * box.w - box.l);
      }
      x = std::clamp(x, box.x_min(), box.x_max());
      y = std::clamp(y, box.y_min(), box.y_max());
      const float intensity = rng.uniform_f();
      const bool keep_sparsity = rng.uniform() < detail::keep_probability(x, y, cfg.sparsity_decay);
      const bool keep_occlusion = !occluded || rng.uniform() >= drop_frac;
      if (keep_sparsity && keep_occlusion) {
        pts.push_back({static_cast<float>(x), static_cast<float>(y), intensity});
        ++kept;
      }
    }
    scene.planned_points.push_back(cfg.points_per_object_base);
    scene.kept_points.push_back(kept);
  }

  // Ground sprinkle, uniform over the bounds.
  for (int k = 0; k < cfg.ground_points; ++k) {
    const float x = static_cast<float>(rng.uniform(cfg.x_min, cfg.x_max));
    const float y = static_cast<float>(rng.uniform(cfg.y_min, cfg.y_max));
    pts.push_back({x, y, rng.uniform_f()});
  }

  // Clutter: small dense clusters that resemble object fragments.
  int remaining = cfg.clutter_noise_points;
  while (remaining > 0) {
    const int cluster = std::min<int>(remaining, static_cast<int>(rng.uniform_int(4, 10)));
    const double ccx = rng.uniform(cfg.x_min + 1.0, cfg.x_max - 1.0);
    const double ccy = rng.uniform(cfg.y_min + 1.0, cfg.y_max - 1.0);
    for (int k = 0; k < cluster; ++k) {
      const double x = std::clamp(ccx + rng.uniform(-1.0, 1.0), cfg.x_min, cfg.x_max);
      const double y = std::clamp(ccy + rng.uniform(-1.0, 1.0), cfg.y_min, cfg.y_max);
      pts.push_back({static_cast<float>(x), static_cast<float>(y), rng.uniform_f()});
    }
    remaining -= cluster;
  }

  if (!pts.empty()) {
    scene.points = Tensor<float>({pts.size(), 3});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      scene.points(i, 0) = pts[i].x;
      scene.points(i, 1) = pts[i].y;
      scene.points(i, 2) = pts[i].intensity;
    }
  } else {
    scene.points = Tensor<float>(std::vector<std::size_t>{});
  }
  return scene;
}

inline void write_scene(const PointCloudScene& scene, const fs::path& dir) {
  std::vector<store::TensorRecord> records;
  if (scene.points.numel() > 0)
    records.push_back(store::TensorRecord::from_tensor("points", scene.points));
  if (!scene.gt_boxes.empty()) {
    Tensor<float> boxes({scene.gt_boxes.size(), 5});
    Tensor<float> counts({scene.gt_boxes.size(), 2});
    for (std::size_t i = 0; i < scene.gt_boxes.size(); ++i) {
      const auto& b = scene.gt_boxes[i];
      boxes(i, 0) = static_cast<float>(b.cx);
      boxes(i, 1) = static_cast<float>(b.cy);
      boxes(i, 2) = static_cast<float>(b.w);
      boxes(i, 3) = static_cast<float>(b.l);
      boxes(i, 4) = static_cast<float>(b.class_id);
      counts(i, 0) = static_cast<float>(scene.planned_points[i]);
      counts(i, 1) = static_cast<float>(scene.kept_points[i]);
    }
    records.push_back(store::TensorRecord::from_tensor("gt_boxes", boxes));
    records.push_back(store::TensorRecord::from_tensor("gt_point_counts", counts));
  }
  std::map<std::string, std::string> attrs{
      {"scene_id", scene.scene_id},
      {"seed", std::to_string(scene.seed)},
      {"n_points", std::to_string(scene.points.numel() > 0 ? scene.points.size(0) : 0)},
      {"n_boxes", std::to_string(scene.gt_boxes.size())}};
  store::write_bundle(records, attrs, dir);
}

inline PointCloudScene read_scene(const fs::path& dir) {
  auto [records, attrs] = store::read_bundle(dir);
  PointCloudScene scene;
  scene.scene_id = attrs.at("scene_id");
  scene.seed = std::stoull(attrs.at("seed"));
  for (auto& r : records) {
    if (r.name == "points") {
      scene.points = r.to_tensor();
    } else if (r.name == "gt_boxes") {
      const auto t = r.to_tensor();
      for (std::size_t i = 0; i < t.size(0); ++i)
        scene.gt_boxes.push_back({t(i, 0), t(i, 1), t(i, 2), t(i, 3),
                                  static_cast<int>(t(i, 4))});
    } else if (r.name == "gt_point_counts") {
      const auto t = r.to_tensor();
      for (std::size_t i = 0; i < t.size(0); ++i) {
        scene.planned_points.push_back(static_cast<int>(t(i, 0)));
        scene.kept_points.push_back(static_cast<int>(t(i, 1)));
      }
    }
  }
  if (scene.points.rank() == 0) scene.points = Tensor<float>(std::vector<std::size_t>{});
  return scene;
}

struct DatasetIndexEntry {
  std::string scene_id;
  std::uint64_t seed = 0;
  std::size_t n_boxes = 0;
  std::size_t n_points = 0;
  std::string dir;  // relative to the index file
};

/// Generates n scenes with per-scene seed = base_seed + i and persists them as
/// tensor-store bundles next to a JSON index.
inline std::vector<DatasetIndexEntry> generate_dataset(const SceneConfig& cfg, std::size_t n,
                                                       std::uint64_t base_seed,
                                                       const fs::path& out_dir) {
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  fs::create_directories(out_dir);
  std::vector<DatasetIndexEntry> index;
  index.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PointCloudScene scene = generate_scene(cfg, base_seed + i);
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%06zu", i);
    scene.scene_id = name;
    write_scene(scene, out_dir / name);
    index.push_back({scene.scene_id, scene.seed, scene.gt_boxes.size(),
                     scene.points.numel() > 0 ? scene.points.size(0) : 0, name});
  }
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : index)
    j.push_back({{"scene_id", e.scene_id},
                 {"seed", e.seed},
                 {"n_boxes", e.n_boxes},
                 {"n_points", e.n_points},
                 {"dir", e.dir}});
  std::ofstream out(out_dir / "index.json", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset index in " + out_dir.string());
  out << j.dump(2) << "\n";
  return index;
}

inline std::vector<DatasetIndexEntry> read_dataset_index(const fs::path& dir) {
  std::ifstream in(dir / "index.json", std::ios::binary);
  if (!in) throw std::runtime_error("missing dataset index: " + (dir / "index.json").string());
  nlohmann::json j;
  in >> j;
  std::vector<DatasetIndexEntry> index;
  for (const auto& e : j)
    index.push_back({e.at("scene_id").get<std::string>(), e.at("seed").get<std::uint64_t>(),
                     e.at("n_boxes").get<std::size_t>(), e.at("n_points").get<std::size_t>(),
                     e.at("dir").get<std::string>()});
  return index;
}

}  // namespace i3d::scene
