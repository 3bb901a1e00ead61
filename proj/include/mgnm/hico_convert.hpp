#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "mgnm/dataset.hpp"

namespace mgnm {

/// Converts HICO-DET annotations in the widely used per-split JSON layout
/// ({"annotation", "filenames", "size", "objects", "verbs", "correspondence"}).
/// "person" is moved to category 0 and the other objects keep their relative
/// order. Annotated boxes become score-1 detections, duplicates merged. Throws
/// UnknownCategory for an id outside the registries and ParseError (with the
/// image index) for malformed records.
Dataset convert_hico(const std::string& train_json, const std::optional<std::string>& test_json,
                     const std::string& name = "hico-det");
Dataset convert_hico_files(const std::filesystem::path& train, const std::optional<std::filesystem::path>& test);

}  // namespace mgnm
