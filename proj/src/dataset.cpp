#include "mgnm/dataset.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mgnm/errors.hpp"

namespace mgnm {

using nlohmann::json;

namespace {

constexpr const char* kDatasetFormat = "mgnm-dataset";
constexpr const char* kPredictionsFormat = "mgnm-predictions";

json box_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box parse_box(const json& j, double width, double height) {
  if (!j.is_array() || j.size() != 4) throw ParseError("box must be an array of four numbers");
  Box b = ingest_box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(), width, height);
  return b;
}

// Predicted boxes may be the all-zero sentinel and are stored verbatim.
Box raw_box(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("box must be an array of four numbers");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json scene_json(const SceneRecord& s) {
  if (!s.appearance_keys.empty() && s.appearance_keys.size() != s.detections.size()) {
    throw ConfigError("scene " + s.image_key + ": appearance keys do not match the detections");
  }
  json dets = json::array();
  for (std::size_t i = 0; i < s.detections.size(); ++i) {
    const Detection& d = s.detections[i];
    json r{{"box", box_json(d.box)}, {"category", d.category}, {"score", d.score}};
    if (d.box.clamped) r["clamped"] = true;
    if (!s.appearance_keys.empty()) r["appearance"] = s.appearance_keys[i];
    dets.push_back(std::move(r));
  }
  json hois = json::array();
  for (const HoiGroundTruth& g : s.ground_truth) {
    hois.push_back({{"human", box_json(g.human)},
                    {"object", g.object ? box_json(*g.object) : json(nullptr)},
                    {"category", g.object_category},
                    {"action", g.action}});
  }
  json r{{"image", s.image_key}, {"width", s.width}, {"height", s.height}, {"detections", dets}, {"hois", hois}};
  if (!s.embedding_key.empty()) r["embedding_key"] = s.embedding_key;
  return r;
}

SceneRecord parse_scene(const json& j) {
  SceneRecord s;
  s.image_key = j.at("image").get<std::string>();
  s.embedding_key = j.value("embedding_key", std::string());
  s.width = j.at("width").get<double>();
  s.height = j.at("height").get<double>();
  if (!(s.width > 0.0 && s.height > 0.0)) throw ParseError("image size must be positive");
  int index = 0;
  for (const json& d : j.at("detections")) {
    Detection det;
    det.box = parse_box(d.at("box"), s.width, s.height);
    if (d.value("clamped", false)) det.box.clamped = true;
    det.category = d.at("category").get<int>();
    det.score = d.at("score").get<double>();
    if (!(det.score >= 0.0 && det.score <= 1.0)) throw ParseError("detection score outside [0, 1]");
    det.source_index = index++;
    s.detections.push_back(det);
    if (d.contains("appearance")) s.appearance_keys.push_back(d.at("appearance").get<std::string>());
  }
  if (!s.appearance_keys.empty() && s.appearance_keys.size() != s.detections.size()) {
    throw ParseError("appearance keys must be given for every detection or none");
  }
  for (const json& h : j.at("hois")) {
    HoiGroundTruth g;
    g.image_key = s.image_key;
    g.human = parse_box(h.at("human"), s.width, s.height);
    if (!h.at("object").is_null()) g.object = parse_box(h.at("object"), s.width, s.height);
    g.object_category = h.at("category").get<int>();
    g.action = h.at("action").get<int>();
    s.ground_truth.push_back(g);
  }
  return s;
}

void check_header(const json& j, const char* format, int version) {
  if (!j.is_object() || !j.contains("format") || j["format"] != format) {
    throw ParseError(std::string("not an ") + format + " file");
  }
  const int v = j.at("version").get<int>();
  if (v != version) throw VersionError(std::string("unsupported ") + format + " version " + std::to_string(v));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
}

bool same_detection(const Detection& a, const Detection& b) {
  return a.box == b.box && a.box.clamped == b.box.clamped && a.category == b.category && a.score == b.score &&
         a.source_index == b.source_index;
}

bool same_scene(const SceneRecord& a, const SceneRecord& b) {
  if (a.image_key != b.image_key || a.width != b.width || a.height != b.height ||
      a.detections.size() != b.detections.size() || a.ground_truth != b.ground_truth ||
      a.appearance_keys != b.appearance_keys || a.embedding_key != b.embedding_key) {
    return false;
  }
  for (std::size_t i = 0; i < a.detections.size(); ++i) {
    if (!same_detection(a.detections[i], b.detections[i])) return false;
  }
  return true;
}

std::vector<HoiGroundTruth> collect(const std::vector<SceneRecord>& scenes) {
  std::vector<HoiGroundTruth> out;
  for (const SceneRecord& s : scenes) out.insert(out.end(), s.ground_truth.begin(), s.ground_truth.end());
  return out;
}

}  // namespace

void Dataset::validate() const {
  if (categories.size() == 0 || categories.names()[0] != "person") {
    throw ConfigError("category registry must start with \"person\"");
  }
  for (const HoiClass& c : hoi.classes()) {
    if (!actions.contains(c.action)) throw UnknownCategory("HOI class refers to unknown action " + std::to_string(c.action));
    if (!categories.contains(c.object)) throw UnknownCategory("HOI class refers to unknown category " + std::to_string(c.object));
  }
  for (const auto* split : {&train, &test}) {
    for (const SceneRecord& s : *split) {
      for (const Detection& d : s.detections) {
        if (!categories.contains(d.category)) {
          throw UnknownCategory("scene " + s.image_key + ": unknown detection category " + std::to_string(d.category));
        }
      }
      for (const HoiGroundTruth& g : s.ground_truth) {
        if (!categories.contains(g.object_category)) {
          throw UnknownCategory("scene " + s.image_key + ": unknown object category " +
                                std::to_string(g.object_category));
        }
        if (!actions.contains(g.action)) {
          throw UnknownCategory("scene " + s.image_key + ": unknown action " + std::to_string(g.action));
        }
        if (!hoi.find(g.action, g.object_category)) {
          throw ConfigError("scene " + s.image_key + ": (" + actions.name(g.action) + ", " +
                            categories.name(g.object_category) + ") is not a registered HOI class");
        }
      }
    }
  }
}

std::vector<HoiGroundTruth> Dataset::train_ground_truth() const { return collect(train); }
std::vector<HoiGroundTruth> Dataset::test_ground_truth() const { return collect(test); }

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.name != b.name || !(a.categories == b.categories) || !(a.actions == b.actions) || !(a.hoi == b.hoi) ||
      a.provider_seed != b.provider_seed || a.train.size() != b.train.size() || a.test.size() != b.test.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    if (!same_scene(a.train[i], b.train[i])) return false;
  }
  for (std::size_t i = 0; i < a.test.size(); ++i) {
    if (!same_scene(a.test[i], b.test[i])) return false;
  }
  return true;
}

std::string dataset_to_json(const Dataset& d) {
  json hoi = json::array();
  for (const HoiClass& c : d.hoi.classes()) hoi.push_back(json::array({c.action, c.object}));
  json train = json::array();
  for (const SceneRecord& s : d.train) train.push_back(scene_json(s));
  json test = json::array();
  for (const SceneRecord& s : d.test) test.push_back(scene_json(s));
  json j{{"format", kDatasetFormat},
         {"version", kDatasetVersion},
         {"name", d.name},
         {"categories", d.categories.names()},
         {"actions", d.actions.names()},
         {"hoi_classes", hoi},
         {"provider_seed", d.provider_seed},
         {"train", train},
         {"test", test}};
  return j.dump(1) + "\n";
}

Dataset dataset_from_json(const std::string& text) {
  const json j = parse_text(text);
  check_header(j, kDatasetFormat, kDatasetVersion);
  Dataset d;
  try {
    d.name = j.value("name", std::string{});
    d.categories = NameRegistry(j.at("categories").get<std::vector<std::string>>());
    d.actions = NameRegistry(j.at("actions").get<std::vector<std::string>>());
    std::vector<HoiClass> classes;
    for (const json& c : j.at("hoi_classes")) classes.push_back({c.at(0).get<int>(), c.at(1).get<int>()});
    d.hoi = HoiRegistry(std::move(classes));
    d.provider_seed = j.value("provider_seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed dataset header: ") + e.what());
  }
  std::ptrdiff_t index = 0;
  for (const char* split : {"train", "test"}) {
    if (!j.contains(split)) throw ParseError(std::string("dataset lacks the ") + split + " split");
    auto& out = std::string_view(split) == "train" ? d.train : d.test;
    for (const json& s : j.at(split)) {
      try {
        out.push_back(parse_scene(s));
      } catch (const json::exception& e) {
        throw ParseError(std::string("malformed scene: ") + e.what(), index);
      } catch (const InvalidBox& e) {
        throw ParseError(std::string("invalid box: ") + e.what(), index);
      } catch (const ParseError& e) {
        throw ParseError(e.what(), index);
      }
      ++index;
    }
  }
  d.validate();
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file(path, dataset_to_json(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_json(read_file(path)); }

void save_predictions(const std::filesystem::path& path, std::span<const HoiPrediction> predictions) {
  json records = json::array();
  for (const HoiPrediction& p : predictions) {
    records.push_back({{"image", p.image_key},
                       {"human", box_json(p.human)},
                       {"object", box_json(p.object)},
                       {"category", p.object_category},
                       {"action", p.action},
                       {"hoi_class", p.hoi_class},
                       {"score", p.score},
                       {"logit", p.logit},
                       {"human_score", p.human_score},
                       {"object_score", p.object_score},
                       {"action_probability", p.action_probability},
                       {"pair", p.pair_index}});
  }
  json j{{"format", kPredictionsFormat}, {"version", kPredictionsVersion}, {"predictions", records}};
  write_file(path, j.dump(1) + "\n");
}

std::vector<HoiPrediction> load_predictions(const std::filesystem::path& path) {
  const json j = parse_text(read_file(path));
  check_header(j, kPredictionsFormat, kPredictionsVersion);
  std::vector<HoiPrediction> out;
  std::ptrdiff_t index = 0;
  for (const json& r : j.at("predictions")) {
    try {
      HoiPrediction p;
      p.image_key = r.at("image").get<std::string>();
      p.human = raw_box(r.at("human"));
      p.object = raw_box(r.at("object"));
      if (!p.human.valid()) throw ParseError("invalid human box");
      if (!p.object.valid() && !p.object.is_sentinel()) throw ParseError("invalid object box");
      p.object_category = r.at("category").get<int>();
      p.action = r.at("action").get<int>();
      p.hoi_class = r.value("hoi_class", -1);
      p.score = r.at("score").get<double>();
      if (!(p.score >= 0.0 && p.score <= 1.0)) throw ParseError("score outside [0, 1]");
      p.logit = r.value("logit", 0.0);
      p.human_score = r.value("human_score", 1.0);
      p.object_score = r.value("object_score", 1.0);
      p.action_probability = r.value("action_probability", 0.0);
      p.pair_index = r.value("pair", -1);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed prediction: ") + e.what(), index);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), index);
    }
    ++index;
  }
  return out;
}

}  // namespace mgnm
