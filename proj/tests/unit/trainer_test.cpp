#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "mmtod/trainer.hpp"

using namespace mmtod;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.vocab_size = 20;
  c.model_dim = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.max_seq_len = 8;
  return c;
}

}  // namespace

TEST_CASE("adamw three steps on a scalar quadratic") {
  // L = (theta - 0.5)^2, theta0 = 1.5; table computed offline at 50 digits.
  const double expected_theta[] = {1.3985000004999999975, 1.3480112202469772576, 1.3228764962299967592};
  const double expected_grad[] = {2.0, 1.797000000999999995, 1.6960224404939545151};
  const double rates[] = {0.1, 0.05, 0.025};
  const auto cfg = tiny();
  TrainConfig tc;
  tc.weight_decay = 0.01;
  Parameters p = Parameters::zeros(cfg), g = Parameters::zeros(cfg);
  auto state = OptimizerState::zeros(cfg);
  p.final_bias(0, 0) = 1.5;
  for (int t = 0; t < 3; ++t) {
    g.final_bias(0, 0) = 2.0 * (p.final_bias(0, 0) - 0.5);
    CHECK(std::abs(g.final_bias(0, 0) - expected_grad[t]) <= 1e-12);
    adamw_step(p, g, state, rates[t], tc);
    CHECK(std::abs(p.final_bias(0, 0) - expected_theta[t]) <= 1e-12);
  }
  CHECK(state.step == 3);
}

TEST_CASE("adamw first step and zero gradient") {
  const auto cfg = tiny();
  TrainConfig tc;
  tc.weight_decay = 0.0;
  Parameters p = Parameters::init(cfg, 3), g = Parameters::zeros(cfg);
  const Parameters before = p;
  auto state = OptimizerState::zeros(cfg);
  adamw_step(p, g, state, 0.1, tc);
  CHECK(p == before);
  g.final_bias(0, 1) = 1.0;
  const double theta = p.final_bias(0, 1);
  adamw_step(p, g, state, 0.1, tc);
  // Second step: m-hat and v-hat still reduce to the single nonzero gradient.
  const double m = 0.1, v = 0.001;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  CHECK(p.final_bias(0, 1) == doctest::Approx(theta - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("decoupled weight decay shrinks multiplicatively") {
  const auto cfg = tiny();
  TrainConfig tc;
  tc.weight_decay = 0.1;
  Parameters p = Parameters::init(cfg, 4), g = Parameters::zeros(cfg);
  auto state = OptimizerState::zeros(cfg);
  const double w0 = p.token_embedding(3, 2);
  double expected = w0;
  for (double lr : {0.5, 0.25, 0.125}) {
    adamw_step(p, g, state, lr, tc);
    expected *= 1.0 - lr * tc.weight_decay;
    CHECK(p.token_embedding(3, 2) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("adamw rejects bad gradients without touching parameters") {
  const auto cfg = tiny();
  TrainConfig tc;
  Parameters p = Parameters::init(cfg, 1), g = Parameters::zeros(cfg);
  const Parameters before = p;
  auto state = OptimizerState::zeros(cfg);
  g.layers[0].fc_bias(0, 0) = std::nan("");
  CHECK_THROWS_WITH_AS(adamw_step(p, g, state, 0.1, tc), doctest::Contains("layers.0.mlp.fc.bias"),
                       std::runtime_error);
  CHECK(p == before);
  CHECK(state.step == 0);
  auto other = tiny();
  other.model_dim = 4;
  CHECK_THROWS_AS(adamw_step(p, Parameters::zeros(other), state, 0.1, tc), std::invalid_argument);
}

TEST_CASE("frozen tensors stay put") {
  const auto cfg = tiny();
  TrainConfig tc;
  Parameters p = Parameters::init(cfg, 1), g = Parameters::init(cfg, 2);
  const Parameters before = p;
  auto state = OptimizerState::zeros(cfg);
  std::vector<std::uint8_t> mask(p.tensors().size(), 0);
  mask[0] = 1;
  adamw_step(p, g, state, 0.1, tc, mask);
  CHECK(p.token_embedding != before.token_embedding);
  CHECK(p.heads == before.heads);
  CHECK(p.layers[0].qkv_weight == before.layers[0].qkv_weight);
}

TEST_CASE("lr schedule") {
  CHECK(lr_schedule(0, 100, 0.2) == 0.2);
  CHECK(lr_schedule(100, 100, 0.2) == 0.0);
  CHECK(lr_schedule(50, 100, 0.2) == doctest::Approx(0.1));
  CHECK_THROWS_AS(lr_schedule(101, 100, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule(-1, 100, 0.2), std::invalid_argument);
}

TEST_CASE("gradient clipping") {
  const auto cfg = tiny();
  Parameters g = Parameters::zeros(cfg);
  g.final_bias(0, 0) = 3.0;
  g.final_bias(0, 1) = 4.0;
  CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(std::sqrt(g.squared_norm()) == doctest::Approx(1.0));
  CHECK(clip_grad_norm(g, 10.0) == doctest::Approx(1.0));
  CHECK(g.final_bias(0, 0) == doctest::Approx(0.6));
}

TEST_CASE("domain sampler covers every example once per epoch") {
  DomainSampler s(10, 10, 2, 7);
  CHECK(s.batches_per_epoch() == 10);
  for (int e = 0; e < 100; ++e) {
    const auto epoch = s.next_epoch();
    CHECK(epoch.size() == 10);
    std::vector<std::size_t> seen[2];
    for (const auto& b : epoch)
      for (auto i : b.indices) seen[static_cast<int>(b.domain)].push_back(i);
    for (auto& v : seen) {
      std::sort(v.begin(), v.end());
      std::vector<std::size_t> all(10);
      for (std::size_t i = 0; i < 10; ++i) all[i] = i;
      CHECK(v == all);
    }
  }
}

TEST_CASE("domain sampler with one domain and uneven batches") {
  DomainSampler s(7, 0, 3, 1);
  const auto epoch = s.next_epoch();
  CHECK(epoch.size() == 3);
  for (const auto& b : epoch) CHECK(b.domain == Domain::Furniture);
  CHECK(epoch.back().indices.size() == 1);
  CHECK_THROWS_AS(DomainSampler(0, 0, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(DomainSampler(1, 1, 0, 1), std::invalid_argument);
}

TEST_CASE("first batch domain is balanced across seeds") {
  int furniture = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    DomainSampler s(8, 8, 2, seed);
    if (s.next_epoch().front().domain == Domain::Furniture) ++furniture;
  }
  CHECK(std::abs(furniture / 1000.0 - 0.5) <= 0.05);
}

TEST_CASE("task sampler frequencies") {
  std::mt19937_64 rng(123);
  auto freq = [&](int mt_epoch, int mt_epochs) {
    std::array<double, 3> f{};
    for (int i = 0; i < 30000; ++i) f[static_cast<std::size_t>(sample_task(mt_epoch, mt_epochs, rng))] += 1;
    for (double& x : f) x /= 30000;
    return f;
  };
  for (int e : {0, 1, 19}) {
    const auto f = freq(e, 20);
    for (double x : f) CHECK(std::abs(x - 1.0 / 3) <= 0.02);
  }
  const auto mid = freq(5, 20);
  CHECK(mid[static_cast<int>(TaskKind::ApiAction)] == 0.0);
  CHECK(std::abs(mid[static_cast<int>(TaskKind::ApiAttribute)] - 1.0 / 3) <= 0.02);
  CHECK(std::abs(mid[static_cast<int>(TaskKind::Lm)] - 2.0 / 3) <= 0.02);
  for (int i = 0; i < 100; ++i) CHECK(sample_task(-1, 20, rng) == TaskKind::Lm);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.lr = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = {};
  tc.beta2 = 1.0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = {};
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
}
