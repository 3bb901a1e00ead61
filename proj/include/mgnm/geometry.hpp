#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace mgnm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using CategoryId = int;
using ActionId = int;

/// Category 0 is always "person".
inline constexpr CategoryId kPersonCategory = 0;

/// Axis-aligned box in absolute pixel coordinates.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  /// Set when ingestion clipped the box to the image bounds.
  bool clamped = false;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x1 + x2); }
  double center_y() const noexcept { return 0.5 * (y1 + y2); }

  /// Strictly positive extent and non-negative coordinates.
  bool valid() const noexcept { return x1 >= 0.0 && y1 >= 0.0 && x1 < x2 && y1 < y2; }

  /// The all-zero box stands in for an absent object (V-COCO occlusion).
  static Box empty_sentinel() noexcept { return Box{}; }
  bool is_sentinel() const noexcept { return x1 == 0.0 && y1 == 0.0 && x2 == 0.0 && y2 == 0.0; }

  friend bool operator==(const Box& a, const Box& b) noexcept {
    return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
  }
};

/// Clamps to [0, width] x [0, height] and validates. Throws InvalidBox when the
/// clamped box has zero area.
Box ingest_box(double x1, double y1, double x2, double y2, double image_width, double image_height);

struct Detection {
  Box box;
  CategoryId category = kPersonCategory;
  double score = 1.0;
  /// Index of this detection in the detector's raw output; keys its appearance embedding.
  int source_index = 0;

  bool is_person() const noexcept { return category == kPersonCategory; }
};

using DetectionSet = std::vector<Detection>;

double iou(const Box& a, const Box& b) noexcept;
double intersection_area(const Box& a, const Box& b) noexcept;

inline constexpr int kSpatialDim = 36;

/// Slot offsets into the spatial feature vector. docs/FORMATS.md has the full table.
namespace spatial_slot {
inline constexpr int kHumanCenterBox = 0;    // cx, cy, w, h
inline constexpr int kObjectCenterBox = 4;   // cx, cy, w, h
inline constexpr int kHumanCorners = 8;      // x1, y1, x2, y2
inline constexpr int kObjectCorners = 12;    // x1, y1, x2, y2
inline constexpr int kHumanArea = 16;
inline constexpr int kObjectArea = 17;
inline constexpr int kHumanAspect = 18;
inline constexpr int kObjectAspect = 19;
inline constexpr int kIou = 20;
inline constexpr int kDx = 21;
inline constexpr int kDy = 22;
inline constexpr int kLogWidthRatio = 23;
inline constexpr int kLogHeightRatio = 24;
inline constexpr int kLogAreaRatio = 25;
inline constexpr int kUnionBox = 26;         // x1, y1, x2, y2, area
inline constexpr int kInterOverHuman = 31;
inline constexpr int kInterOverObject = 32;
inline constexpr int kLogAreas = 33;         // log(area_h), log(area_o), log(area_union)
}  // namespace spatial_slot

inline constexpr double kLogEpsilon = 1e-6;

std::array<double, kSpatialDim> spatial_features(const Box& human, const Box& object,
                                                 double image_width, double image_height);

struct PairPolicy {
  bool persons_as_objects = true;
};

enum class Role { Human, Object };

struct Incidence {
  int pair = 0;
  Role role = Role::Human;

  friend bool operator==(const Incidence&, const Incidence&) = default;
};

struct PairIndex {
  int human = 0;
  int object = 0;

  friend bool operator==(const PairIndex&, const PairIndex&) = default;
};

/// Enumerated human-object pairs over a detection set. Immutable once built.
struct PairTable {
  std::vector<PairIndex> pairs;
  /// One row of spatial features per pair.
  Matrix spatial;
  /// incident[node] lists every (pair, role) touching that node.
  std::vector<std::vector<Incidence>> incident;

  std::size_t size() const noexcept { return pairs.size(); }
  std::size_t node_count() const noexcept { return incident.size(); }
};

/// One pair per (person, other detection) with the other detection a non-person
/// object or, when allowed, another person. Throws EmptyPairSet when nothing pairs.
PairTable enumerate_pairs(std::span<const Detection> detections, const PairPolicy& policy,
                          double image_width, double image_height);

}  // namespace mgnm
