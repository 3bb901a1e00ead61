#include "mgnm/evaluation.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "mgnm/errors.hpp"

namespace mgnm::evaluation {

SplitRegistry SplitRegistry::from_training(const HoiRegistry& classes, std::span<const HoiGroundTruth> train_gts) {
  SplitRegistry s{classes, std::vector<int>(classes.size(), 0)};
  for (const HoiGroundTruth& gt : train_gts) {
    const auto id = classes.find(gt.action, gt.object_category);
    if (!id) {
      throw ConfigError("training triplet (action " + std::to_string(gt.action) + ", object " +
                        std::to_string(gt.object_category) + ") is not a registered HOI class");
    }
    ++s.train_counts[static_cast<std::size_t>(*id)];
  }
  return s;
}

std::vector<int> SplitRegistry::rare_classes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < train_counts.size(); ++i) {
    if (train_counts[i] < kRareThreshold) out.push_back(static_cast<int>(i));
  }
  return out;
}

namespace {

// Candidate quality of `pred` against `gt`, or nullopt when it cannot match.
using MatchRule = std::function<std::optional<double>(const HoiPrediction&, const HoiGroundTruth&)>;

// Greedy matcher over predictions already grouped so that every candidate gt in
// `gts` is of the prediction's class and image.
std::vector<bool> greedy_match(std::span<const HoiPrediction> preds, const std::vector<const HoiGroundTruth*>& gts,
                               const MatchRule& rule) {
  std::vector<bool> flags(preds.size(), false);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double best = -1.0;
    std::ptrdiff_t best_gt = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const auto q = rule(preds[i], *gts[g]);
      if (q && *q > best) {
        best = *q;
        best_gt = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best_gt >= 0) {
      taken[static_cast<std::size_t>(best_gt)] = true;
      flags[i] = true;
    }
  }
  return flags;
}

MatchRule hico_rule(double thr) {
  return [thr](const HoiPrediction& p, const HoiGroundTruth& g) -> std::optional<double> {
    if (!g.object || p.object.is_sentinel()) return std::nullopt;
    const double q = std::min(iou(p.human, g.human), iou(p.object, *g.object));
    if (q > thr) return q;
    return std::nullopt;
  };
}

// Matches predictions (visited in the given order) per image against the given
// ground truth, all of which share one class. Returns flags aligned with `order`.
std::vector<bool> match_in_order(std::span<const HoiPrediction> preds, const std::vector<std::size_t>& order,
                                 const std::vector<const HoiGroundTruth*>& gts, const MatchRule& rule) {
  std::map<std::string, std::vector<const HoiGroundTruth*>> gts_by_image;
  for (const HoiGroundTruth* g : gts) gts_by_image[g->image_key].push_back(g);
  std::map<std::string, std::vector<bool>> taken;
  for (auto& [img, list] : gts_by_image) taken[img].assign(list.size(), false);

  std::vector<bool> flags(order.size(), false);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const HoiPrediction& p = preds[order[k]];
    auto it = gts_by_image.find(p.image_key);
    if (it == gts_by_image.end()) continue;
    std::vector<bool>& used = taken[p.image_key];
    double best = -1.0;
    std::ptrdiff_t best_gt = -1;
    for (std::size_t g = 0; g < it->second.size(); ++g) {
      if (used[g]) continue;
      const auto q = rule(p, *it->second[g]);
      if (q && *q > best) {
        best = *q;
        best_gt = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best_gt >= 0) {
      used[static_cast<std::size_t>(best_gt)] = true;
      flags[k] = true;
    }
  }
  return flags;
}

// Indices sorted by descending score; equal scores keep input order.
std::vector<std::size_t> score_order(std::span<const HoiPrediction> preds, const std::vector<std::size_t>& subset) {
  std::vector<std::size_t> order = subset;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  return order;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

int resolve_class(const HoiPrediction& p, const HoiRegistry& registry) {
  if (p.hoi_class >= 0) return p.hoi_class;
  const auto id = registry.find(p.action, p.object_category);
  return id ? *id : -1;
}

}  // namespace

std::vector<bool> match_predictions(std::span<const HoiPrediction> predictions,
                                    std::span<const HoiGroundTruth> ground_truth, const HoiRegistry& registry,
                                    double iou_threshold) {
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> pred_groups;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    pred_groups[{predictions[i].image_key, resolve_class(predictions[i], registry)}].push_back(i);
  }
  std::map<std::pair<std::string, int>, std::vector<const HoiGroundTruth*>> gt_groups;
  for (const HoiGroundTruth& g : ground_truth) {
    const auto id = registry.find(g.action, g.object_category);
    if (id) gt_groups[{g.image_key, *id}].push_back(&g);
  }
  std::vector<bool> flags(predictions.size(), false);
  const MatchRule rule = hico_rule(iou_threshold);
  for (const auto& [key, idx] : pred_groups) {
    auto it = gt_groups.find(key);
    if (it == gt_groups.end() || key.second < 0) continue;
    std::vector<HoiPrediction> group;
    group.reserve(idx.size());
    for (std::size_t i : idx) group.push_back(predictions[i]);
    const std::vector<bool> f = greedy_match(group, it->second, rule);
    for (std::size_t k = 0; k < idx.size(); ++k) flags[idx[k]] = f[k];
  }
  return flags;
}

double average_precision(const std::vector<bool>& flags, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  const std::size_t n = flags.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (flags[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  // Envelope: precision at rank i becomes the best precision at any later rank.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

PrCurve pr_curve(const std::vector<bool>& flags, std::size_t num_gt) {
  PrCurve c;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) ++tp;
    c.precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    c.recall.push_back(num_gt ? static_cast<double>(tp) / static_cast<double>(num_gt) : 0.0);
  }
  return c;
}

std::vector<bool> class_flags(std::span<const HoiPrediction> predictions, std::span<const HoiGroundTruth> ground_truth,
                              const HoiRegistry& registry, int hoi_class, HicoSetting setting, std::size_t* num_gt) {
  const HoiClass& cls = registry.at(hoi_class);
  std::vector<const HoiGroundTruth*> gts;
  std::set<std::string> images_with_object;
  for (const HoiGroundTruth& g : ground_truth) {
    if (g.object_category == cls.object) images_with_object.insert(g.image_key);
    if (g.action == cls.action && g.object_category == cls.object) gts.push_back(&g);
  }
  std::vector<std::size_t> subset;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (resolve_class(predictions[i], registry) != hoi_class) continue;
    if (setting == HicoSetting::KnownObject && !images_with_object.contains(predictions[i].image_key)) continue;
    subset.push_back(i);
  }
  if (num_gt) *num_gt = gts.size();
  return match_in_order(predictions, score_order(predictions, subset), gts, hico_rule(0.5));
}

HicoMetrics evaluate_hico(std::span<const HoiPrediction> predictions, std::span<const HoiGroundTruth> ground_truth,
                          const SplitRegistry& splits, HicoSetting setting) {
  const HoiRegistry& registry = splits.classes;
  const std::size_t C = registry.size();

  std::vector<std::vector<std::size_t>> preds_by_class(C);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int c = resolve_class(predictions[i], registry);
    if (c >= 0) preds_by_class[static_cast<std::size_t>(c)].push_back(i);
  }
  std::vector<std::vector<const HoiGroundTruth*>> gts_by_class(C);
  std::map<CategoryId, std::set<std::string>> images_with_object;
  for (const HoiGroundTruth& g : ground_truth) {
    images_with_object[g.object_category].insert(g.image_key);
    const auto id = registry.find(g.action, g.object_category);
    if (id) gts_by_class[static_cast<std::size_t>(*id)].push_back(&g);
  }

  HicoMetrics m;
  m.class_ap.assign(C, std::nullopt);
  std::vector<double> full, rare, non_rare;
  const MatchRule rule = hico_rule(0.5);
  for (std::size_t c = 0; c < C; ++c) {
    if (gts_by_class[c].empty()) continue;
    std::vector<std::size_t> subset;
    if (setting == HicoSetting::KnownObject) {
      const auto& allowed = images_with_object[registry.at(static_cast<int>(c)).object];
      for (std::size_t i : preds_by_class[c]) {
        if (allowed.contains(predictions[i].image_key)) subset.push_back(i);
      }
    } else {
      subset = preds_by_class[c];
    }
    const std::vector<bool> flags = match_in_order(predictions, score_order(predictions, subset), gts_by_class[c], rule);
    const double ap = average_precision(flags, gts_by_class[c].size());
    m.class_ap[c] = ap;
    full.push_back(ap);
    (splits.rare(static_cast<int>(c)) ? rare : non_rare).push_back(ap);
  }
  m.full = mean_of(full);
  m.rare = mean_of(rare);
  m.non_rare = mean_of(non_rare);
  m.full_classes = static_cast<int>(full.size());
  m.rare_classes = static_cast<int>(rare.size());
  m.non_rare_classes = static_cast<int>(non_rare.size());
  return m;
}

VcocoMetrics evaluate_vcoco(std::span<const HoiPrediction> predictions, std::span<const HoiGroundTruth> ground_truth,
                            int num_actions, VcocoScenario scenario, double iou_threshold) {
  const MatchRule rule = [scenario, iou_threshold](const HoiPrediction& p,
                                                   const HoiGroundTruth& g) -> std::optional<double> {
    const double ih = iou(p.human, g.human);
    if (!(ih > iou_threshold)) return std::nullopt;
    if (!g.object) {
      if (scenario == VcocoScenario::One && !p.object.is_sentinel()) return std::nullopt;
      return ih;
    }
    if (p.object.is_sentinel()) return std::nullopt;
    const double q = std::min(ih, iou(p.object, *g.object));
    if (q > iou_threshold) return q;
    return std::nullopt;
  };

  VcocoMetrics m;
  m.action_ap.assign(static_cast<std::size_t>(std::max(num_actions, 0)), std::nullopt);
  std::vector<double> aps;
  for (int a = 0; a < num_actions; ++a) {
    std::vector<const HoiGroundTruth*> gts;
    for (const HoiGroundTruth& g : ground_truth) {
      if (g.action == a) gts.push_back(&g);
    }
    if (gts.empty()) continue;
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      if (predictions[i].action == a) subset.push_back(i);
    }
    const std::vector<bool> flags = match_in_order(predictions, score_order(predictions, subset), gts, rule);
    const double ap = average_precision(flags, gts.size());
    m.action_ap[static_cast<std::size_t>(a)] = ap;
    aps.push_back(ap);
  }
  m.role_ap = mean_of(aps);
  m.actions = static_cast<int>(aps.size());
  return m;
}

}  // namespace mgnm::evaluation
