#include "mgnm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mgnm/errors.hpp"

namespace mgnm {

Box ingest_box(double x1, double y1, double x2, double y2, double image_width,
               double image_height) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw InvalidBox("non-finite box coordinate");
  }
  Box box{std::clamp(x1, 0.0, image_width), std::clamp(y1, 0.0, image_height),
          std::clamp(x2, 0.0, image_width), std::clamp(y2, 0.0, image_height)};
  box.clamped = box.x1 != x1 || box.y1 != y1 || box.x2 != x2 || box.y2 != y2;
  if (!box.valid()) {
    throw InvalidBox("degenerate box [" + std::to_string(x1) + ", " + std::to_string(y1) + ", " +
                     std::to_string(x2) + ", " + std::to_string(y2) + "]");
  }
  return box;
}

double intersection_area(const Box& a, const Box& b) noexcept {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

double iou(const Box& a, const Box& b) noexcept {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  // Operands ordered so iou(a, b) and iou(b, a) round identically.
  const double union_area = (a.area() + b.area()) - inter;
  return std::clamp(inter / union_area, 0.0, 1.0);
}

std::array<double, kSpatialDim> spatial_features(const Box& h, const Box& o, double image_width,
                                                 double image_height) {
  namespace s = spatial_slot;
  const double W = image_width;
  const double H = image_height;
  const double image_area = W * H;
  std::array<double, kSpatialDim> f{};

  auto center_box = [&](const Box& b, int at) {
    f[at + 0] = b.center_x() / W;
    f[at + 1] = b.center_y() / H;
    f[at + 2] = b.width() / W;
    f[at + 3] = b.height() / H;
  };
  auto corners = [&](const Box& b, int at) {
    f[at + 0] = b.x1 / W;
    f[at + 1] = b.y1 / H;
    f[at + 2] = b.x2 / W;
    f[at + 3] = b.y2 / H;
  };
  center_box(h, s::kHumanCenterBox);
  center_box(o, s::kObjectCenterBox);
  corners(h, s::kHumanCorners);
  corners(o, s::kObjectCorners);

  const double area_h = h.area() / image_area;
  const double area_o = o.area() / image_area;
  f[s::kHumanArea] = area_h;
  f[s::kObjectArea] = area_o;
  f[s::kHumanAspect] = h.width() / h.height();
  f[s::kObjectAspect] = o.width() / o.height();
  f[s::kIou] = iou(h, o);
  f[s::kDx] = (o.center_x() - h.center_x()) / W;
  f[s::kDy] = (o.center_y() - h.center_y()) / H;

  constexpr double eps = kLogEpsilon;
  f[s::kLogWidthRatio] = std::log((o.width() / W + eps) / (h.width() / W + eps));
  f[s::kLogHeightRatio] = std::log((o.height() / H + eps) / (h.height() / H + eps));
  f[s::kLogAreaRatio] = std::log((area_o + eps) / (area_h + eps));

  const Box u{std::min(h.x1, o.x1), std::min(h.y1, o.y1), std::max(h.x2, o.x2), std::max(h.y2, o.y2)};
  corners(u, s::kUnionBox);
  const double area_u = u.area() / image_area;
  f[s::kUnionBox + 4] = area_u;

  const double inter = intersection_area(h, o);
  f[s::kInterOverHuman] = inter / h.area();
  f[s::kInterOverObject] = inter / o.area();

  f[s::kLogAreas + 0] = std::log(area_h + eps);
  f[s::kLogAreas + 1] = std::log(area_o + eps);
  f[s::kLogAreas + 2] = std::log(area_u + eps);
  return f;
}

PairTable enumerate_pairs(std::span<const Detection> detections, const PairPolicy& policy,
                          double image_width, double image_height) {
  PairTable table;
  const int n = static_cast<int>(detections.size());
  table.incident.resize(detections.size());
  for (int h = 0; h < n; ++h) {
    if (!detections[h].is_person()) continue;
    for (int o = 0; o < n; ++o) {
      if (o == h) continue;
      if (detections[o].is_person() && !policy.persons_as_objects) continue;
      const int p = static_cast<int>(table.pairs.size());
      table.pairs.push_back({h, o});
      table.incident[h].push_back({p, Role::Human});
      table.incident[o].push_back({p, Role::Object});
    }
  }
  if (table.pairs.empty()) throw EmptyPairSet();

  table.spatial.resize(static_cast<Eigen::Index>(table.pairs.size()), kSpatialDim);
  for (std::size_t p = 0; p < table.pairs.size(); ++p) {
    const auto f = spatial_features(detections[table.pairs[p].human].box,
                                    detections[table.pairs[p].object].box, image_width, image_height);
    for (int k = 0; k < kSpatialDim; ++k) table.spatial(static_cast<Eigen::Index>(p), k) = f[k];
  }
  return table;
}

}  // namespace mgnm
