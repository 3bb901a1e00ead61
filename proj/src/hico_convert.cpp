#include "mgnm/hico_convert.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mgnm/errors.hpp"

namespace mgnm {

using nlohmann::json;

namespace {

struct Registries {
  NameRegistry categories;
  NameRegistry actions;
  HoiRegistry hoi;
  std::vector<int> object_map;  // source object id -> category id
  std::vector<int> hoi_action;  // source HOI id -> action
  std::vector<int> hoi_object;  // source HOI id -> category id
};

Registries read_registries(const json& j) {
  Registries r;
  const auto objects = j.at("objects").get<std::vector<std::string>>();
  std::vector<std::string> names{"person"};
  int person = -1;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i] == "person") person = static_cast<int>(i);
  }
  if (person < 0) throw ParseError("object list has no \"person\" entry");
  r.object_map.resize(objects.size());
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (static_cast<int>(i) == person) {
      r.object_map[i] = kPersonCategory;
    } else {
      r.object_map[i] = static_cast<int>(names.size());
      names.push_back(objects[i]);
    }
  }
  r.categories = NameRegistry(names);
  r.actions = NameRegistry(j.at("verbs").get<std::vector<std::string>>());

  std::vector<HoiClass> classes;
  const json& corr = j.at("correspondence");
  r.hoi_action.assign(corr.size(), -1);
  r.hoi_object.assign(corr.size(), -1);
  for (const json& c : corr) {
    const int id = c.at(0).get<int>();
    const int obj = c.at(1).get<int>();
    const int verb = c.at(2).get<int>();
    if (id < 0 || id >= static_cast<int>(corr.size())) throw ParseError("HOI id out of range in correspondence");
    if (obj < 0 || obj >= static_cast<int>(objects.size())) {
      throw UnknownCategory("correspondence refers to unknown object " + std::to_string(obj));
    }
    if (!r.actions.contains(verb)) throw UnknownCategory("correspondence refers to unknown verb " + std::to_string(verb));
    r.hoi_action[static_cast<std::size_t>(id)] = verb;
    r.hoi_object[static_cast<std::size_t>(id)] = r.object_map[static_cast<std::size_t>(obj)];
  }
  for (std::size_t id = 0; id < corr.size(); ++id) {
    if (r.hoi_action[id] < 0) throw ParseError("correspondence misses HOI id " + std::to_string(id));
    classes.push_back({r.hoi_action[id], r.hoi_object[id]});
  }
  r.hoi = HoiRegistry(std::move(classes));
  return r;
}

int add_detection(SceneRecord& s, const Box& box, int category) {
  for (const Detection& d : s.detections) {
    if (d.category == category && d.box == box) return d.source_index;
  }
  const int index = static_cast<int>(s.detections.size());
  s.detections.push_back({box, category, 1.0, index});
  return index;
}

std::vector<SceneRecord> read_split(const json& j, const Registries& r, const char* split) {
  const json& annotations = j.at("annotation");
  const json& filenames = j.at("filenames");
  const json& sizes = j.at("size");
  if (filenames.size() != annotations.size() || sizes.size() != annotations.size()) {
    throw ParseError(std::string(split) + ": annotation, filenames and size lengths differ");
  }
  std::vector<SceneRecord> scenes;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const json& a = annotations[i];
    try {
      SceneRecord s;
      s.image_key = filenames[i].get<std::string>();
      s.width = sizes[i].at(0).get<double>();
      s.height = sizes[i].at(1).get<double>();
      const json& bh = a.at("boxes_h");
      const json& bo = a.at("boxes_o");
      const json& hoi = a.at("hoi");
      const json& obj = a.at("object");
      const json& verb = a.at("verb");
      const std::size_t n = hoi.size();
      if (bh.size() != n || bo.size() != n || obj.size() != n || verb.size() != n) {
        throw ParseError("per-instance arrays differ in length");
      }
      for (std::size_t k = 0; k < n; ++k) {
        const int h = hoi[k].get<int>();
        if (h < 0 || h >= static_cast<int>(r.hoi.size())) throw UnknownCategory("unknown HOI id " + std::to_string(h));
        const int o = obj[k].get<int>();
        if (o < 0 || o >= static_cast<int>(r.object_map.size())) {
          throw UnknownCategory("unknown object id " + std::to_string(o));
        }
        const int v = verb[k].get<int>();
        const int category = r.object_map[static_cast<std::size_t>(o)];
        if (!r.actions.contains(v)) throw UnknownCategory("unknown verb id " + std::to_string(v));
        if (r.hoi_action[static_cast<std::size_t>(h)] != v || r.hoi_object[static_cast<std::size_t>(h)] != category) {
          throw ParseError("HOI id " + std::to_string(h) + " disagrees with its verb/object ids");
        }
        HoiGroundTruth g;
        g.image_key = s.image_key;
        g.human = ingest_box(bh[k].at(0).get<double>(), bh[k].at(1).get<double>(), bh[k].at(2).get<double>(),
                             bh[k].at(3).get<double>(), s.width, s.height);
        g.object = ingest_box(bo[k].at(0).get<double>(), bo[k].at(1).get<double>(), bo[k].at(2).get<double>(),
                              bo[k].at(3).get<double>(), s.width, s.height);
        g.object_category = category;
        g.action = v;
        add_detection(s, g.human, kPersonCategory);
        add_detection(s, *g.object, category);
        s.ground_truth.push_back(g);
      }
      scenes.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError(std::string(split) + ": " + e.what(), static_cast<std::ptrdiff_t>(i));
    } catch (const InvalidBox& e) {
      throw ParseError(std::string(split) + ": " + e.what(), static_cast<std::ptrdiff_t>(i));
    } catch (const ParseError& e) {
      throw ParseError(std::string(split) + ": " + e.what(), static_cast<std::ptrdiff_t>(i));
    }
  }
  return scenes;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed annotation JSON: ") + e.what());
  }
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

Dataset convert_hico(const std::string& train_json, const std::optional<std::string>& test_json,
                     const std::string& name) {
  const json train = parse(train_json);
  Registries r;
  try {
    r = read_registries(train);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed registries: ") + e.what());
  }
  Dataset d;
  d.name = name;
  d.categories = r.categories;
  d.actions = r.actions;
  d.hoi = r.hoi;
  d.train = read_split(train, r, "train");
  if (test_json) d.test = read_split(parse(*test_json), r, "test");
  d.validate();
  return d;
}

Dataset convert_hico_files(const std::filesystem::path& train, const std::optional<std::filesystem::path>& test) {
  return convert_hico(slurp(train), test ? std::optional<std::string>(slurp(*test)) : std::nullopt);
}

}  // namespace mgnm
