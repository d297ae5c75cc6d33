#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "mmtod/model.hpp"

using namespace mmtod;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 50;
  c.model_dim = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.max_seq_len = 24;
  return c;
}

struct Sequence {
  std::vector<int> tokens;
  std::vector<Segment> segments;
};

Sequence random_sequence(std::mt19937_64& rng, std::size_t n, int vocab) {
  Sequence s;
  for (std::size_t i = 0; i < n; ++i) {
    s.tokens.push_back(std::uniform_int_distribution<int>(0, vocab - 1)(rng));
    s.segments.push_back(static_cast<Segment>(std::uniform_int_distribution<int>(0, 3)(rng)));
  }
  return s;
}

bool rows_identical(const Matrix& a, const Matrix& b, Eigen::Index rows) {
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      if (std::memcmp(&a(r, c), &b(r, c), sizeof(double)) != 0) return false;
  return true;
}

}  // namespace

TEST_CASE("forward shapes and config validation") {
  const auto cfg = small_config();
  const auto p = Parameters::init(cfg, 1);
  std::mt19937_64 rng(1);
  const auto s = random_sequence(rng, 10, cfg.vocab_size);
  const auto cache = forward(p, s.tokens, s.segments, cfg);
  CHECK(cache.hidden.rows() == 10);
  CHECK(cache.hidden.cols() == 16);
  CHECK(cache.logits.rows() == 10);
  CHECK(cache.logits.cols() == 50);
  const auto last = forward(p, s.tokens, s.segments, cfg, true);
  CHECK(last.logits.rows() == 1);
  CHECK((last.logits.row(0) - cache.logits.row(9)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(p.heads[0].w1.rows() == 16);
  CHECK(p.heads[0].w3.cols() == 7);
  CHECK(p.heads[1].w3.cols() == 60);

  std::vector<int> too_long(25, 1);
  std::vector<Segment> segs(25, Segment::User);
  CHECK_THROWS_AS(forward(p, too_long, segs, cfg), std::invalid_argument);
  std::vector<int> bad_id = {1, 50};
  CHECK_THROWS_AS(forward(p, bad_id, std::vector<Segment>(2, Segment::User), cfg), std::invalid_argument);
  auto bad = cfg;
  bad.n_heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("causality: later tokens never change earlier logits") {
  const auto cfg = small_config();
  std::mt19937_64 rng(77);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = Parameters::init(cfg, static_cast<std::uint64_t>(trial));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 24)(rng);
    auto s = random_sequence(rng, n, cfg.vocab_size);
    const auto before = forward(p, s.tokens, s.segments, cfg);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
    for (std::size_t i = k; i < n; ++i) {
      s.tokens[i] = (s.tokens[i] + 1 + static_cast<int>(i)) % cfg.vocab_size;
      s.segments[i] = static_cast<Segment>((static_cast<int>(s.segments[i]) + 1) % 4);
    }
    const auto after = forward(p, s.tokens, s.segments, cfg);
    if (!rows_identical(before.logits, after.logits, static_cast<Eigen::Index>(k))) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("masked targets do not affect the LM loss") {
  const auto cfg = small_config();
  std::mt19937_64 rng(5);
  const auto p = Parameters::init(cfg, 2);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_sequence(rng, 16, cfg.vocab_size);
    const auto cache = forward(p, s.tokens, s.segments, cfg);
    LmTarget t;
    t.targets.assign(s.tokens.begin() + 1, s.tokens.end());
    for (std::size_t i = 0; i < t.targets.size(); ++i) t.mask.push_back(i >= 6 ? 1 : 0);
    const double base = loss(p, cache, t);
    for (std::size_t i = 0; i < 6; ++i) t.targets[i] = std::uniform_int_distribution<int>(0, 49)(rng);
    const double shuffled = loss(p, cache, t);
    if (std::memcmp(&base, &shuffled, sizeof base) != 0) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("lm_loss against a direct computation") {
  Matrix logits(2, 3);
  logits << 1.0, 2.0, 3.0, 0.5, 0.5, 0.5;
  const std::vector<int> targets = {2, 0};
  const std::vector<std::uint8_t> mask = {1, 1};
  const double row0 = -std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0)));
  const double row1 = std::log(3.0);
  CHECK(lm_loss(logits, targets, mask) == doctest::Approx((row0 + row1) / 2).epsilon(1e-14));
  const std::vector<std::uint8_t> first_only = {1, 0};
  CHECK(lm_loss(logits, targets, first_only) == doctest::Approx(row0).epsilon(1e-14));
  CHECK_THROWS_AS(lm_loss(logits, targets, std::vector<std::uint8_t>{0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(lm_loss(logits, std::vector<int>{1}, first_only), std::invalid_argument);
}

TEST_CASE("classification losses") {
  RowVector logits(3);
  logits << 0.2, -1.0, 2.0;
  const auto sm = softmax(logits);
  CHECK(sm.sum() == doctest::Approx(1.0));
  ClassLabel label;
  label.index = 2;
  CHECK(classification_loss(logits, label, HeadKind::FurnitureAction) == doctest::Approx(-std::log(sm(2))));
  RowVector multi(7);
  multi << 0.0, 1.0, -1.0, 2.0, 0.0, 0.0, 0.0;
  ClassLabel flags;
  flags.flags = {1, 0, 1, 1, 0, 0, 0};
  double expected = 0;
  const auto sg = sigmoid(multi);
  for (int i = 0; i < 7; ++i) expected -= flags.flags[static_cast<std::size_t>(i)] ? std::log(sg(i)) : std::log(1 - sg(i));
  CHECK(classification_loss(multi, flags, HeadKind::FashionAttribute) == doctest::Approx(expected / 7).epsilon(1e-14));
  // Large logits stay finite.
  RowVector huge(2);
  huge << 1000.0, -1000.0;
  CHECK(std::isfinite(classification_loss(huge, ClassLabel{1, {}}, HeadKind::FashionAction)));
  ClassLabel two;
  two.flags = {0, 1};
  CHECK(std::isfinite(classification_loss(huge, two, HeadKind::FashionAttribute)));
}

TEST_CASE("backward accumulates with scale") {
  const auto cfg = small_config();
  const auto p = Parameters::init(cfg, 3);
  std::mt19937_64 rng(9);
  const auto s = random_sequence(rng, 8, cfg.vocab_size);
  const auto cache = forward(p, s.tokens, s.segments, cfg);
  LmTarget t;
  t.targets.assign(s.tokens.begin() + 1, s.tokens.end());
  t.mask.assign(t.targets.size(), 1);
  Parameters once = Parameters::zeros(cfg), twice = Parameters::zeros(cfg);
  const double l = backward(p, cache, t, cfg, once);
  backward(p, cache, t, cfg, twice, 0.5);
  backward(p, cache, t, cfg, twice, 0.5);
  CHECK(l == doctest::Approx(loss(p, cache, t)));
  CHECK((once.token_embedding - twice.token_embedding).cwiseAbs().maxCoeff() < 1e-15);
  // The LM path leaves every head untouched.
  for (const auto& h : once.heads) CHECK(h.w1.isZero(0.0));
}

TEST_CASE("gradient check on every loss path") {
  const auto cfg = [] {
    auto c = small_config();
    c.max_seq_len = 12;
    return c;
  }();
  for (LossPath path : {LossPath::Lm, LossPath::FurnitureAction, LossPath::FurnitureAttribute,
                        LossPath::FashionAction, LossPath::FashionAttribute}) {
    const auto r = grad_check(cfg, 3, path, 4);
    CAPTURE(r.worst_tensor);
    CHECK(r.max_relative_error <= 1e-4);
    CHECK(r.coordinates >= 100);
  }
}

TEST_CASE("parameter helpers") {
  const auto cfg = small_config();
  auto p = Parameters::init(cfg, 4);
  CHECK(p == Parameters::init(cfg, 4));
  CHECK(!(p == Parameters::init(cfg, 5)));
  CHECK(p.all_finite());
  std::size_t total = 0;
  for (const auto& [name, t] : p.tensors()) total += static_cast<std::size_t>(t->size());
  CHECK(total == p.parameter_count());
  CHECK(p.tensors().front().first == "token_embedding");
  p.set_zero();
  CHECK(p.squared_norm() == 0.0);
  CHECK(head_name(HeadKind::FashionAttribute) == "fashion_attribute");
  CHECK(action_head(Domain::Fashion) == HeadKind::FashionAction);
  CHECK(attribute_head(Domain::Furniture) == HeadKind::FurnitureAttribute);
}
