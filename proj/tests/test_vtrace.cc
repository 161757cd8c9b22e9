#include <cmath>
#include <random>

#include "doctest.h"
#include "oracle/reference.h"
#include "seedling/error.h"
#include "seedling/vtrace.h"

using namespace seedling;
using namespace seedling::vtrace;

namespace {

VTraceInputs random_instance(std::mt19937_64& rng, std::size_t T, bool on_policy) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> logp(-3.0, -0.05);
  std::bernoulli_distribution done(0.15);
  VTraceInputs in;
  for (std::size_t t = 0; t < T; ++t) {
    const double mu = logp(rng);
    in.behavior_log_prob.push_back(mu);
    in.target_log_prob.push_back(on_policy ? mu : logp(rng));
    in.reward.push_back(n01(rng));
    in.done.push_back(done(rng));
    in.value.push_back(n01(rng));
  }
  in.bootstrap_value = n01(rng);
  return in;
}

}  // namespace

TEST_SUITE("vtrace") {

TEST_CASE("hand-computed two-step example") {
  VTraceInputs in;
  in.behavior_log_prob = {-0.5, -0.5};
  in.target_log_prob = {-0.5, -0.5};
  in.reward = {0.5, 1.0};
  in.done = {0, 0};
  in.value = {1.0, 2.0};
  in.bootstrap_value = 0.0;
  VTraceConfig cfg;
  cfg.discount = 0.9;
  const auto out = vtrace_targets(in, cfg);
  CHECK(out.vs[1] == doctest::Approx(1.0));
  CHECK(out.vs[0] == doctest::Approx(1.4));
}

TEST_CASE("on-policy targets are lambda returns") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 300; ++i) {
    const std::size_t T = 1 + i % 10;
    const auto in = random_instance(rng, T, true);
    VTraceConfig cfg;
    cfg.discount = 0.95;
    cfg.lambda = (i % 3) / 2.0;
    const auto out = vtrace_targets(in, cfg);
    const auto ref = oracle::lambda_returns(in.reward, in.done, in.value,
                                            in.bootstrap_value, cfg.discount,
                                            cfg.lambda);
    for (std::size_t t = 0; t < T; ++t) CHECK(std::abs(out.vs[t] - ref[t]) <= 1e-9);
  }
}

TEST_CASE("off-policy targets follow the definition") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 300; ++i) {
    const std::size_t T = 1 + i % 10;
    const auto in = random_instance(rng, T, false);
    VTraceConfig cfg;
    cfg.discount = 0.9;
    cfg.lambda = i % 2 ? 1.0 : 0.7;
    cfg.rho_bar = 1.0 + (i % 4) * 0.5;
    cfg.c_bar = 1.0;
    const auto out = vtrace_targets(in, cfg);
    const auto ref = oracle::vtrace_by_definition(
        in.behavior_log_prob, in.target_log_prob, in.reward, in.done, in.value,
        in.bootstrap_value, cfg.discount, cfg.lambda, cfg.rho_bar, cfg.c_bar);
    for (std::size_t t = 0; t < T; ++t) {
      CHECK(std::abs(out.vs[t] - ref.vs[t]) <= 1e-9);
      CHECK(std::abs(out.pg_advantages[t] - ref.pg[t]) <= 1e-9);
    }
  }
}

TEST_CASE("done cuts the bootstrap") {
  VTraceInputs in;
  in.behavior_log_prob = {-1.0, -1.0};
  in.target_log_prob = {-1.0, -1.0};
  in.reward = {1.0, 2.0};
  in.done = {1, 0};
  in.value = {0.0, 0.0};
  in.bootstrap_value = 10.0;
  VTraceConfig cfg;
  cfg.discount = 0.5;
  const auto out = vtrace_targets(in, cfg);
  CHECK(out.vs[0] == doctest::Approx(1.0));
  CHECK(out.vs[1] == doctest::Approx(7.0));
}

TEST_CASE("clipping of importance weights") {
  VTraceInputs in;
  in.behavior_log_prob = {std::log(0.1)};
  in.target_log_prob = {std::log(0.9)};
  in.reward = {1.0};
  in.done = {1};
  in.value = {0.0};
  VTraceConfig cfg;
  const auto out = vtrace_targets(in, cfg);
  CHECK(out.rhos[0] == doctest::Approx(1.0));
  CHECK(out.vs[0] == doctest::Approx(1.0));
}

TEST_CASE("invalid inputs") {
  VTraceConfig cfg;
  VTraceInputs empty;
  CHECK_THROWS_AS(vtrace_targets(empty, cfg), ConfigError);
  VTraceInputs bad;
  bad.behavior_log_prob = {-INFINITY};
  bad.target_log_prob = {-INFINITY};
  bad.reward = {0};
  bad.done = {0};
  bad.value = {0};
  CHECK_THROWS_AS(vtrace_targets(bad, cfg), NumericError);
  VTraceConfig clip;
  clip.rho_bar = 0.5;
  clip.c_bar = 1.0;
  CHECK_THROWS_AS(clip.validate(), ConfigError);
}

TEST_CASE("loss gradient matches finite differences") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  const std::size_t N = 4, A = 3;
  std::vector<float> logits(N * A), values(N);
  for (float& v : logits) v = static_cast<float>(n01(rng));
  for (float& v : values) v = static_cast<float>(n01(rng));
  std::vector<std::int32_t> actions{0, 2, 1, 1};
  std::vector<double> vs{0.5, -0.2, 1.0, 0.3}, adv{1.0, -0.5, 0.2, 2.0};
  VTraceConfig cfg;
  cfg.entropy_coefficient = 0.1;
  std::vector<std::uint8_t> mask{1, 1, 0, 1};
  const auto res = vtrace_loss(logits, A, values, actions, vs, adv, cfg, mask);
  CHECK(res.d_logits[2 * A] == 0.0f);
  auto total = [&](const std::vector<float>& l, const std::vector<float>& v) {
    return vtrace_loss(l, A, v, actions, vs, adv, cfg, mask).terms.total;
  };
  const double h = 1e-2;
  for (std::size_t i = 0; i < N * A; ++i) {
    auto up = logits, dn = logits;
    up[i] += static_cast<float>(h);
    dn[i] -= static_cast<float>(h);
    const double fd = (total(up, values) - total(dn, values)) / (2 * h);
    CHECK(std::abs(fd - res.d_logits[i]) <= 2e-3);
  }
  for (std::size_t i = 0; i < N; ++i) {
    auto up = values, dn = values;
    up[i] += static_cast<float>(h);
    dn[i] -= static_cast<float>(h);
    const double fd = (total(logits, up) - total(logits, dn)) / (2 * h);
    CHECK(std::abs(fd - res.d_values[i]) <= 2e-3);
  }
}

TEST_CASE("log-softmax is stable for large logits") {
  std::vector<float> l{1000.0f, 0.0f, -1000.0f};
  std::vector<double> out(3);
  log_softmax(l, out);
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(std::isfinite(out[2]));
}

}  // TEST_SUITE
