#include <doctest.h>

#include "mgnm/errors.hpp"
#include "mgnm/evaluation.hpp"
#include "oracles.hpp"

using namespace mgnm;
using namespace mgnm::evaluation;

namespace {

HoiPrediction pred(const Box& h, const Box& o, double score, CategoryId cat = 1, ActionId action = 0,
                   const std::string& img = "a") {
  HoiPrediction p;
  p.image_key = img;
  p.human = h;
  p.object = o;
  p.object_category = cat;
  p.action = action;
  p.score = score;
  return p;
}

HoiGroundTruth gt(const Box& h, std::optional<Box> o, CategoryId cat = 1, ActionId action = 0,
                  const std::string& img = "a") {
  return {img, h, o, cat, action};
}

const Box H{0, 0, 100, 100};
const Box O{200, 200, 300, 300};

Box shift(const Box& b, double dx) { return {b.x1 + dx, b.y1, b.x2 + dx, b.y2}; }

}  // namespace

TEST_CASE("average precision examples") {
  CHECK(average_precision({true, true}, 2) == 1.0);
  CHECK(average_precision({false, true}, 1) == 0.5);
  CHECK(average_precision({true, false, true}, 2) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
  CHECK(average_precision({true}, 4) == 0.25);
  CHECK(average_precision({}, 3) == 0.0);
  CHECK(average_precision({true}, 0) == 0.0);
}

TEST_CASE("average precision matches the PR-curve oracle on random flag sequences") {
  rng::Stream s(rng::hash("ap-flags"));
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = s.below(50) + 1;
    std::vector<bool> flags;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      flags.push_back(s.uniform() < 0.4);
      tp += flags.back() ? 1 : 0;
    }
    const std::size_t num_gt = tp + s.below(5);
    CHECK(std::abs(average_precision(flags, num_gt) - test::brute_force_ap(flags, num_gt)) < 1e-12);
  }
}

TEST_CASE("pr curve points") {
  const PrCurve c = pr_curve({true, false, true}, 4);
  CHECK(c.precision == std::vector<double>{1.0, 0.5, 2.0 / 3.0});
  CHECK(c.recall == std::vector<double>{0.25, 0.25, 0.5});
}

TEST_CASE("matcher on crafted three-prediction, two-truth fixtures") {
  const HoiRegistry registry({{0, 1}});
  const Box near1 = shift(H, 5), near2 = shift(H, 15);
  struct Case {
    const char* name;
    std::vector<HoiPrediction> preds;
    std::vector<HoiGroundTruth> gts;
    std::vector<bool> expected;
  };
  const std::vector<Case> cases{
      {"duplicate detections: one true positive per truth",
       {pred(H, O, 0.9), pred(near1, O, 0.8), pred(near2, O, 0.7)},
       {gt(H, O), gt(shift(H, 400), O)},
       {true, false, false}},
      {"greedy claims the best truth even when it starves a later prediction",
       {pred(shift(H, 12), O, 0.9), pred(shift(H, 35), O, 0.8), pred(shift(H, 500), O, 0.1)},
       {gt(H, O), gt(shift(H, 20), O)},
       {true, false, false}},
      {"a below-threshold overlap never matches",
       {pred(shift(H, 60), O, 0.9), pred(H, shift(O, 70), 0.8), pred(H, O, 0.7)},
       {gt(H, O), gt(shift(H, 250), shift(O, 250))},
       {false, false, true}},
      {"equal quality goes to the lower truth index",
       {pred(H, O, 0.9), pred(H, O, 0.8), pred(H, O, 0.7)},
       {gt(H, O), gt(H, O)},
       {true, true, false}},
      {"a truth without object box is not matchable",
       {pred(H, O, 0.9), pred(H, O, 0.8), pred(near1, O, 0.7)},
       {gt(H, std::nullopt), gt(H, O)},
       {true, false, false}},
  };
  for (const Case& c : cases) {
    INFO(c.name);
    CHECK(test::exhaustive_match(c.preds, c.gts) == c.expected);
    CHECK(match_predictions(c.preds, c.gts, registry) == c.expected);
  }
}

TEST_CASE("matcher agrees with the exhaustive oracle on random three-by-two fixtures") {
  const HoiRegistry registry({{0, 1}});
  rng::Stream s(rng::hash("matcher-random"));
  for (int t = 0; t < 300; ++t) {
    std::vector<HoiGroundTruth> gts{gt(shift(H, s.uniform(0, 40)), shift(O, s.uniform(0, 40))),
                                    gt(shift(H, s.uniform(0, 40)), shift(O, s.uniform(0, 40)))};
    std::vector<HoiPrediction> preds;
    for (int k = 0; k < 3; ++k) preds.push_back(pred(shift(H, s.uniform(0, 50)), shift(O, s.uniform(0, 50)), 1.0 - 0.1 * k));
    CHECK(match_predictions(preds, gts, registry) == test::exhaustive_match(preds, gts));
  }
}

TEST_CASE("matching is confined to the prediction's image and class") {
  const HoiRegistry registry({{0, 1}, {1, 1}});
  const std::vector<HoiPrediction> preds{pred(H, O, 0.9, 1, 1), pred(H, O, 0.8, 1, 0, "b"), pred(H, O, 0.7)};
  const std::vector<HoiGroundTruth> gts{gt(H, O)};
  CHECK(match_predictions(preds, gts, registry) == std::vector<bool>{false, false, true});
}

TEST_CASE("class AP agrees with the from-scratch oracle on random fixtures") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto f = test::random_eval_fixture(seed);
    const SplitRegistry splits{f.registry, std::vector<int>(f.registry.size(), 20)};
    const HicoMetrics m = evaluate_hico(f.preds, f.gts, splits, HicoSetting::Default);
    for (int c = 0; c < static_cast<int>(f.registry.size()); ++c) {
      const auto want = test::oracle_class_ap(f.preds, f.gts, f.registry.at(c));
      const auto& got = m.class_ap[static_cast<std::size_t>(c)];
      REQUIRE(got.has_value() == want.has_value());
      if (want) CHECK(std::abs(*got - *want) < 1e-9);
    }
  }
}

TEST_CASE("known-object setting never scores below default") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto f = test::random_eval_fixture(seed);
    const SplitRegistry splits{f.registry, std::vector<int>(f.registry.size(), 20)};
    const HicoMetrics d = evaluate_hico(f.preds, f.gts, splits, HicoSetting::Default);
    const HicoMetrics k = evaluate_hico(f.preds, f.gts, splits, HicoSetting::KnownObject);
    CHECK(k.full >= d.full - 1e-15);
    for (std::size_t c = 0; c < d.class_ap.size(); ++c) {
      if (d.class_ap[c]) CHECK(*k.class_ap[c] >= *d.class_ap[c] - 1e-15);
    }
  }
}

TEST_CASE("known-object drops predictions on images without the object") {
  const HoiRegistry registry({{0, 1}});
  const SplitRegistry splits{registry, {20}};
  const std::vector<HoiGroundTruth> gts{gt(H, O)};
  const std::vector<HoiPrediction> preds{pred(H, O, 0.5), pred(H, O, 0.9, 1, 0, "other")};
  CHECK(evaluate_hico(preds, gts, splits, HicoSetting::Default).full == 0.5);
  CHECK(evaluate_hico(preds, gts, splits, HicoSetting::KnownObject).full == 1.0);
}

TEST_CASE("rare and non-rare subsets") {
  const HoiRegistry registry({{0, 1}, {1, 1}, {0, 2}});
  std::vector<HoiGroundTruth> train;
  for (int i = 0; i < 10; ++i) train.push_back(gt(H, O, 1, 0));
  for (int i = 0; i < 9; ++i) train.push_back(gt(H, O, 1, 1));
  const SplitRegistry splits = SplitRegistry::from_training(registry, train);
  CHECK(splits.rare_classes() == std::vector<int>{1, 2});
  CHECK_FALSE(splits.rare(0));

  const std::vector<HoiGroundTruth> test{gt(H, O, 1, 0), gt(H, O, 1, 1)};
  const std::vector<HoiPrediction> preds{pred(H, O, 0.9, 1, 0), pred(shift(H, 300), O, 0.9, 1, 1)};
  const HicoMetrics m = evaluate_hico(preds, test, splits, HicoSetting::Default);
  CHECK(m.full_classes == 2);
  CHECK(m.rare_classes == 1);
  CHECK(m.non_rare == 1.0);
  CHECK(m.rare == 0.0);
  CHECK(m.full == 0.5);
  CHECK_FALSE(m.class_ap[2].has_value());

  train.push_back(gt(H, O, 3, 0));
  CHECK_THROWS_AS(SplitRegistry::from_training(registry, train), ConfigError);
}

TEST_CASE("V-COCO scenarios") {
  SUBCASE("identical without occluded objects") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto f = test::random_eval_fixture(seed);
      const auto s1 = evaluate_vcoco(f.preds, f.gts, 3, VcocoScenario::One);
      const auto s2 = evaluate_vcoco(f.preds, f.gts, 3, VcocoScenario::Two);
      CHECK(s1.role_ap == s2.role_ap);
    }
  }
  SUBCASE("occluded objects") {
    const std::vector<HoiGroundTruth> gts{gt(H, std::nullopt)};
    const std::vector<HoiPrediction> with_box{pred(H, O, 0.9)};
    const std::vector<HoiPrediction> with_sentinel{pred(H, Box::empty_sentinel(), 0.9)};
    CHECK(evaluate_vcoco(with_box, gts, 1, VcocoScenario::One).role_ap == 0.0);
    CHECK(evaluate_vcoco(with_box, gts, 1, VcocoScenario::Two).role_ap == 1.0);
    CHECK(evaluate_vcoco(with_sentinel, gts, 1, VcocoScenario::One).role_ap == 1.0);
    CHECK(evaluate_vcoco(with_sentinel, gts, 1, VcocoScenario::Two).role_ap == 1.0);
  }
  SUBCASE("actions without ground truth are not averaged") {
    const std::vector<HoiGroundTruth> gts{gt(H, O, 1, 1)};
    const auto m = evaluate_vcoco({}, gts, 3, VcocoScenario::Two);
    CHECK(m.actions == 1);
    CHECK(m.role_ap == 0.0);
  }
}
