#include "mgnm/registry.hpp"

#include "mgnm/errors.hpp"

namespace mgnm {

NameRegistry::NameRegistry(std::vector<std::string> names) : names_(std::move(names)) {}

std::optional<int> NameRegistry::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

const std::string& NameRegistry::name(int id) const {
  if (!contains(id)) throw UnknownCategory("unregistered id " + std::to_string(id));
  return names_[static_cast<std::size_t>(id)];
}

HoiRegistry::HoiRegistry(std::vector<HoiClass> classes) : classes_(std::move(classes)) {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto key = std::make_pair(classes_[i].action, classes_[i].object);
    if (!index_.emplace(key, static_cast<int>(i)).second) {
      throw ConfigError("duplicate HOI class (action " + std::to_string(key.first) + ", object " +
                        std::to_string(key.second) + ")");
    }
  }
}

std::optional<int> HoiRegistry::find(ActionId action, CategoryId object) const {
  auto it = index_.find({action, object});
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

}  // namespace mgnm
