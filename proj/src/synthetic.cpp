#include "mgnm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "mgnm/errors.hpp"
#include "mgnm/providers.hpp"
#include "mgnm/rng.hpp"

namespace mgnm::synth {

namespace {

const char* const kObjectNames[] = {"bicycle", "cup",   "kite",     "laptop", "umbrella", "bench",
                                    "book",    "chair", "hair_drier", "horse", "surfboard", "bottle"};

// Resampling bands that keep labels away from the rule boundaries.
constexpr double kIouBandLow = 0.25;
constexpr double kIouBandHigh = 0.35;
constexpr double kMinCenterGap = 0.02;  // fraction of image height
constexpr double kMinVisualMargin = 0.1;

// Embeddings a task does not read share fixed keys: appearance carries the role
// only, and image-level embeddings vary per image only under the visual rule.
constexpr const char* kPersonAppearanceKey = "synthetic/person";
constexpr const char* kObjectAppearanceKey = "synthetic/object";
constexpr const char* kSharedImageKey = "synthetic/image";

std::string category_name(int i) {
  constexpr int n = static_cast<int>(std::size(kObjectNames));
  if (i < n) return kObjectNames[i];
  return std::string(kObjectNames[i % n]) + "_" + std::to_string(i / n);
}

bool has(TaskKind kind, TaskKind family) { return kind == family || kind == TaskKind::Mixed; }

int family_offset(TaskKind kind, TaskKind family) {
  if (kind != TaskKind::Mixed) return 0;
  return family == TaskKind::SpatialRule ? 0 : family == TaskKind::VisualRule ? 2 : 4;
}

Box clip(double cx, double cy, double w, double h, double W, double H) {
  return Box{std::clamp(cx - w / 2, 0.0, W - 2.0), std::clamp(cy - h / 2, 0.0, H - 2.0),
             std::clamp(cx + w / 2, 2.0, W), std::clamp(cy + h / 2, 2.0, H)};
}

Box rounded(Box b) {
  auto r = [](double v) { return std::round(v * 4.0) / 4.0; };
  return Box{r(b.x1), r(b.y1), r(b.x2), r(b.y2)};
}

bool spatial_margin_ok(const Box& h, const Box& o, double H) {
  const double overlap = iou(h, o);
  if (overlap > kIouBandLow && overlap < kIouBandHigh) return false;
  if (overlap > kIouBandLow && std::abs(h.center_y() - o.center_y()) < kMinCenterGap * H) return false;
  return true;
}

struct Generator {
  const SynthTaskSpec& spec;
  rng::Stream stream;
  std::vector<double> category_cdf;
  std::shared_ptr<const EmbeddingProvider> visual;

  int sample_category() {
    const double u = stream.uniform();
    for (std::size_t i = 0; i < category_cdf.size(); ++i) {
      if (u < category_cdf[i]) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(category_cdf.size());
  }

  Box person_box() {
    const double W = spec.image_width, H = spec.image_height;
    const double w = stream.uniform(0.1, 0.25) * W;
    const double h = stream.uniform(0.3, 0.6) * H;
    return rounded(clip(stream.uniform(w / 2, W - w / 2), stream.uniform(h / 2, H - h / 2), w, h, W, H));
  }

  Box object_box(const std::vector<Box>& persons) {
    const double W = spec.image_width, H = spec.image_height;
    if (stream.uniform() < 0.5) {
      // Near a person: a perturbed copy shifted up or down.
      const Box& p = persons[stream.below(persons.size())];
      const double w = p.width() * stream.uniform(0.7, 1.1);
      const double h = p.height() * stream.uniform(0.6, 1.0);
      const double dx = stream.uniform(-0.15, 0.15) * p.width();
      const double dy = (stream.uniform() < 0.5 ? -1.0 : 1.0) * stream.uniform(0.05, 0.3) * p.height();
      return rounded(clip(p.center_x() + dx, p.center_y() + dy, w, h, W, H));
    }
    const double w = stream.uniform(0.05, 0.3) * W;
    const double h = stream.uniform(0.05, 0.3) * H;
    return rounded(clip(stream.uniform(w / 2, W - w / 2), stream.uniform(h / 2, H - h / 2), w, h, W, H));
  }

  SceneRecord scene(const std::string& base_key) {
    const double W = spec.image_width, H = spec.image_height;
    SceneRecord s;
    s.width = W;
    s.height = H;
    s.image_key = base_key;
    if (has(spec.kind, TaskKind::VisualRule)) {
      for (int attempt = 1; std::abs(visual_embedding(*visual, s.image_key)(0, 0)) < kMinVisualMargin; ++attempt) {
        s.image_key = base_key + "~" + std::to_string(attempt);
      }
    } else {
      s.embedding_key = kSharedImageKey;
    }
    const bool spatial = has(spec.kind, TaskKind::SpatialRule);

    std::vector<Box> persons;
    const int m = stream.range(1, 3);
    for (int i = 0; i < m; ++i) persons.push_back(person_box());
    std::vector<Box> objects;
    std::vector<int> categories;
    const int n = stream.range(1, 4);
    while (objects.empty()) {
      for (int j = 0; j < n; ++j) {
        for (int attempt = 0; attempt < 64; ++attempt) {
          const Box b = object_box(persons);
          if (!b.valid() || b.width() < 4 || b.height() < 4) continue;
          const bool ok = !spatial || std::all_of(persons.begin(), persons.end(),
                                                  [&](const Box& p) { return spatial_margin_ok(p, b, H); });
          if (ok) {
            objects.push_back(b);
            categories.push_back(sample_category());
            break;
          }
        }
      }
    }

    int index = 0;
    for (const Box& p : persons) {
      s.detections.push_back({p, kPersonCategory, stream.uniform(0.5, 1.0), index++});
      s.appearance_keys.push_back(kPersonAppearanceKey);
    }
    for (std::size_t j = 0; j < objects.size(); ++j) {
      s.detections.push_back({objects[j], categories[j], stream.uniform(0.5, 1.0), index++});
      s.appearance_keys.push_back(kObjectAppearanceKey);
    }

    const bool odd_present =
        std::any_of(categories.begin(), categories.end(), [](int c) { return c % 2 == 1; });
    const bool visual_positive =
        has(spec.kind, TaskKind::VisualRule) && visual_embedding(*visual, s.image_key)(0, 0) > 0.0;
    for (const Box& p : persons) {
      for (std::size_t j = 0; j < objects.size(); ++j) {
        auto emit = [&](TaskKind family, bool first) {
          s.ground_truth.push_back(
              {s.image_key, p, objects[j], categories[j], family_offset(spec.kind, family) + (first ? 0 : 1)});
        };
        if (spatial) {
          const bool above = p.center_y() < objects[j].center_y();
          emit(TaskKind::SpatialRule, iou(p, objects[j]) > kSpatialIouThreshold && above);
        }
        if (has(spec.kind, TaskKind::VisualRule)) emit(TaskKind::VisualRule, visual_positive);
        if (has(spec.kind, TaskKind::CategoryRule)) emit(TaskKind::CategoryRule, odd_present);
      }
    }
    return s;
  }
};

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::SpatialRule: return "spatial-rule";
    case TaskKind::VisualRule: return "visual-rule";
    case TaskKind::CategoryRule: return "category-rule";
    case TaskKind::Mixed: return "mixed";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view text) {
  for (TaskKind k : {TaskKind::SpatialRule, TaskKind::VisualRule, TaskKind::CategoryRule, TaskKind::Mixed}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown synthetic task '" + std::string(text) + "'");
}

int SynthTaskSpec::actions() const { return kind == TaskKind::Mixed ? 6 : 2; }

void SynthTaskSpec::validate() const {
  if (num_categories < 1) throw ConfigError("synth.num_categories must be at least 1");
  if (num_actions != 0 && num_actions != actions()) {
    throw ConfigError("synth.num_actions must be " + std::to_string(actions()) + " for " + std::string(to_string(kind)));
  }
  if (train_scenes < 1 || test_scenes < 0) throw ConfigError("synth scene counts must be positive");
  if (!(long_tail >= 0.0)) throw ConfigError("synth.long_tail must be non-negative");
  if (visual_dim < 1) throw ConfigError("synth.visual_dim must be positive");
  if (!(image_width >= 64.0 && image_height >= 64.0)) throw ConfigError("synth image must be at least 64x64");
}

Dataset generate_synthetic(const SynthTaskSpec& spec) {
  spec.validate();
  Dataset d;
  d.name = std::string(to_string(spec.kind));
  d.provider_seed = spec.provider_seed.value_or(spec.seed);

  std::vector<std::string> categories{"person"};
  for (int i = 0; i < spec.num_categories; ++i) categories.push_back(category_name(i));
  d.categories = NameRegistry(categories);

  std::vector<std::string> actions;
  for (TaskKind family : {TaskKind::SpatialRule, TaskKind::VisualRule, TaskKind::CategoryRule}) {
    if (!has(spec.kind, family)) continue;
    const std::string stem(to_string(family).substr(0, to_string(family).find('-')));
    actions.push_back(stem + "_a0");
    actions.push_back(stem + "_a1");
  }
  d.actions = NameRegistry(actions);

  std::vector<HoiClass> classes;
  for (int a = 0; a < static_cast<int>(actions.size()); ++a) {
    for (int c = 1; c <= spec.num_categories; ++c) classes.push_back({a, c});
  }
  d.hoi = HoiRegistry(std::move(classes));

  ProviderConfig pc;
  pc.seed = d.provider_seed;
  pc.visual_dim = spec.visual_dim;
  const ProviderSet providers = ProviderSet::from_config(pc);

  std::vector<double> cdf;
  double total = 0.0;
  for (int c = 0; c < spec.num_categories; ++c) total += std::pow(c + 1.0, -spec.long_tail);
  double acc = 0.0;
  for (int c = 0; c < spec.num_categories; ++c) {
    acc += std::pow(c + 1.0, -spec.long_tail) / total;
    cdf.push_back(acc);
  }
  cdf.back() = 1.0;

  Generator gen{spec, rng::Stream(rng::hash("synthetic-scenes", spec.seed)), cdf, providers.visual};
  char key[32];
  for (int i = 0; i < spec.train_scenes; ++i) {
    std::snprintf(key, sizeof key, "train-%06d", i);
    d.train.push_back(gen.scene(key));
  }
  for (int i = 0; i < spec.test_scenes; ++i) {
    std::snprintf(key, sizeof key, "test-%06d", i);
    d.test.push_back(gen.scene(key));
  }
  d.validate();
  return d;
}

}  // namespace mgnm::synth
