#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mgnm/geometry.hpp"

namespace mgnm {

/// Ordered names; the index is the id. Category registries reserve id 0 for "person".
class NameRegistry {
 public:
  NameRegistry() = default;
  explicit NameRegistry(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  bool contains(int id) const noexcept { return id >= 0 && id < static_cast<int>(names_.size()); }
  std::optional<int> find(std::string_view name) const;
  /// Throws UnknownCategory for an unregistered id.
  const std::string& name(int id) const;
  const std::vector<std::string>& names() const noexcept { return names_; }

  friend bool operator==(const NameRegistry& a, const NameRegistry& b) { return a.names_ == b.names_; }

 private:
  std::vector<std::string> names_;
};

struct HoiClass {
  ActionId action = 0;
  CategoryId object = 0;

  friend bool operator==(const HoiClass&, const HoiClass&) = default;
};

/// The valid (action, object category) combinations; the position is the HOI class id.
class HoiRegistry {
 public:
  HoiRegistry() = default;
  explicit HoiRegistry(std::vector<HoiClass> classes);

  std::size_t size() const noexcept { return classes_.size(); }
  std::optional<int> find(ActionId action, CategoryId object) const;
  const HoiClass& at(int id) const { return classes_.at(static_cast<std::size_t>(id)); }
  const std::vector<HoiClass>& classes() const noexcept { return classes_; }

  friend bool operator==(const HoiRegistry& a, const HoiRegistry& b) { return a.classes_ == b.classes_; }

 private:
  std::vector<HoiClass> classes_;
  std::map<std::pair<ActionId, CategoryId>, int> index_;
};

}  // namespace mgnm
