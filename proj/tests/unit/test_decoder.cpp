#include <doctest.h>

#include <cmath>

#include "mgnm/decoder.hpp"
#include "mgnm/errors.hpp"
#include "support.hpp"

using namespace mgnm;

namespace {

decoder::DecoderConfig small_decoder(int layers = 2) { return {layers, 2, 8, 16, 5}; }

}  // namespace

TEST_CASE("decoder keeps row alignment and normalizes attention") {
  ParameterStore store(3);
  const auto cfg = small_decoder();
  decoder::register_parameters(store, cfg, 4);
  const Matrix pairs = test::random_matrix(3, 8, 1);
  const Matrix backbone = test::random_matrix(9, 5, 2);
  ad::Tape tape(false);
  const auto res = decoder::decode(tape, store, cfg, tape.constant(pairs), tape.constant(backbone));
  CHECK(res.out.rows() == 3);
  CHECK(res.out.cols() == 8);
  REQUIRE(res.attention.size() == 2);
  for (const auto& layer : res.attention) {
    REQUIRE(layer.size() == 2);
    for (const Matrix& head : layer) {
      CHECK(head.rows() == 3);
      CHECK(head.cols() == 9);
      for (Eigen::Index r = 0; r < 3; ++r) CHECK(head.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(head.minCoeff() >= 0.0);
    }
  }

  // Decoding one pair alone yields the same row: pairs do not attend to each other.
  ad::Tape single(false);
  const Matrix one = decoder::decode(single, store, cfg, single.constant(pairs.row(1)), single.constant(backbone)).out.value();
  CHECK((one - res.out.value().row(1)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(decoder::action_logits(tape, store, res.out).cols() == 4);
}

TEST_CASE("zero decoder layers pass features through") {
  ParameterStore store(3);
  const auto cfg = small_decoder(0);
  decoder::register_parameters(store, cfg, 2);
  CHECK_FALSE(store.contains("decoder.kv_proj.w"));
  const Matrix pairs = test::random_matrix(2, 8, 4);
  ad::Tape tape(false);
  CHECK(decoder::decode(tape, store, cfg, tape.constant(pairs), tape.constant(Matrix::Zero(4, 5))).out.value() == pairs);
}

TEST_CASE("decoder gradients") {
  ParameterStore store(5);
  const auto cfg = small_decoder(1);
  decoder::register_parameters(store, cfg, 3);
  const Matrix pairs = test::random_matrix(2, 8, 6), backbone = test::random_matrix(4, 5, 7);
  auto f = [&](ad::Tape& t, ParameterStore& s) {
    return decoder::action_logits(t, s, decoder::decode(t, s, cfg, t.constant(pairs), t.constant(backbone)).out);
  };
  const auto r = test::check_param_grads(f, store, store.names());
  CHECK_MESSAGE(r.max_rel < 1e-4, r.worst << " rel " << r.max_rel);
}

TEST_CASE("decoder shape checks") {
  ParameterStore store(5);
  const auto cfg = small_decoder(1);
  decoder::register_parameters(store, cfg, 3);
  ad::Tape tape(false);
  CHECK_THROWS_AS(decoder::decode(tape, store, cfg, tape.constant(Matrix::Zero(2, 7)), tape.constant(Matrix::Zero(4, 5))),
                  ShapeError);
  CHECK_THROWS_AS(decoder::decode(tape, store, cfg, tape.constant(Matrix::Zero(2, 8)), tape.constant(Matrix::Zero(4, 6))),
                  ShapeError);
}

TEST_CASE("sigmoid is stable at the extremes") {
  CHECK(decoder::sigmoid(0.0) == 0.5);
  CHECK(decoder::sigmoid(800.0) == 1.0);
  CHECK(decoder::sigmoid(-800.0) == 0.0);
  CHECK(decoder::sigmoid(-30.0) > 0.0);
  CHECK(decoder::sigmoid(2.0) + decoder::sigmoid(-2.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("score composition") {
  const DetectionSet dets = test::two_by_two_detections();
  const PairTable pairs = enumerate_pairs(dets, PairPolicy{}, 640, 480);
  // Action 0 is valid with cup only, action 1 with cup and kite.
  const HoiRegistry registry({{0, 1}, {1, 1}, {1, 2}});
  Matrix logits(static_cast<Eigen::Index>(pairs.size()), 2);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 0.3 * static_cast<double>(i) - 1.0;

  const auto preds = decoder::compose_scores(logits, pairs, dets, registry, 1.0, "img");
  std::size_t expected = 0;
  for (const PairIndex& p : pairs.pairs) {
    for (ActionId a = 0; a < 2; ++a) expected += registry.find(a, dets[static_cast<std::size_t>(p.object)].category) ? 1 : 0;
  }
  CHECK(preds.size() == expected);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const HoiPrediction& q = preds[i];
    const PairIndex& p = pairs.pairs[static_cast<std::size_t>(q.pair_index)];
    const double sh = dets[static_cast<std::size_t>(p.human)].score, so = dets[static_cast<std::size_t>(p.object)].score;
    const double logit = logits(q.pair_index, q.action);
    CHECK(q.score == doctest::Approx(sh * so / (1.0 + std::exp(-logit))).epsilon(1e-14));
    CHECK(q.hoi_class == *registry.find(q.action, q.object_category));
    if (i > 0) CHECK(preds[i - 1].score >= q.score);
  }

  SUBCASE("lambda zero drops the detector term") {
    for (const auto& q : decoder::compose_scores(logits, pairs, dets, registry, 0.0, "img")) {
      CHECK(q.score == q.action_probability);
    }
  }
  SUBCASE("lambda scales the detector term") {
    const auto p2 = decoder::compose_scores(logits, pairs, dets, registry, 2.0, "img");
    for (const auto& q : p2) {
      CHECK(q.score == doctest::Approx(std::pow(q.human_score * q.object_score, 2.0) * q.action_probability));
    }
  }
  CHECK_THROWS_AS(decoder::compose_scores(logits, pairs, dets, registry, -1.0, "img"), ConfigError);
  CHECK_THROWS_AS(decoder::compose_scores(logits.topRows(1), pairs, dets, registry, 1.0, "img"), ShapeError);
}
