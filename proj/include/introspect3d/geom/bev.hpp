#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace i3d {

/// Axis-aligned BEV box: centre (cx, cy), extents w (along x) and l (along y),
/// both in metres.
struct BevBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double l = 0.0;
  int class_id = 0;

  double x_min() const { return cx - 0.5 * w; }
  double x_max() const { return cx + 0.5 * w; }
  double y_min() const { return cy - 0.5 * l; }
  double y_max() const { return cy + 0.5 * l; }
  double area() const { return w * l; }

  bool contains(double x, double y) const {
    return x >= x_min() && x <= x_max() && y >= y_min() && y <= y_max();
  }
};

/// Intersection-over-union of two axis-aligned BEV rectangles.
inline double iou_bev(const BevBox& a, const BevBox& b) {
  if (a.w <= 0.0 || a.l <= 0.0 || b.w <= 0.0 || b.l <= 0.0)
    throw std::invalid_argument("iou_bev: box extents must be positive");
  const double ix = std::max(0.0, std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min()));
  const double iy = std::max(0.0, std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct Detection {
  BevBox box;
  double score = 0.0;  // in [0,1]
};

/// Greedy score-descending suppression. Survivors keep score order; no pair
/// of survivors overlaps with IoU > threshold. Equal scores break ties by
/// original position so the result is deterministic.
inline std::vector<Detection> nms(const std::vector<Detection>& detections, double iou_threshold) {
  std::vector<std::size_t> order(detections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (iou_bev(detections[idx].box, k.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(detections[idx]);
  }
  return kept;
}

}  // namespace i3d
