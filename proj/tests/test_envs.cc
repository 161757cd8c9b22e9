#include <cmath>

#include "doctest.h"
#include "seedling/envs.h"
#include "seedling/error.h"

using namespace seedling;
using namespace seedling::envs;

namespace {

// Brute-force optimal return of the chain from `state` within `steps`
// remaining moves, by exhaustive search over action sequences.
double best_return(std::size_t N, std::size_t state, std::size_t steps, double g) {
  if (state == N - 1) return 0.0;
  if (steps == 0) return 0.0;
  double best = 0.0;
  for (int a = 0; a < 2; ++a) {
    const std::size_t next = a == 1 ? state + 1 : (state > 0 ? state - 1 : 0);
    const double v = next == N - 1 ? 1.0 : g * best_return(N, next, steps - 1, g);
    best = std::max(best, v);
  }
  return best;
}

}  // namespace

TEST_SUITE("envs") {

TEST_CASE("catch geometry and rewards") {
  EnvSpec s;
  Catch env(s);
  auto obs = env.reset_to(4);
  REQUIRE(obs.size() == 100);
  CHECK(obs[4] == 1.0f);
  CHECK(obs[50 + 9 * 5 + 2] == 1.0f);
  StepResult r;
  for (int t = 0; t < 9; ++t) {
    CHECK_FALSE(r.done);
    r = env.step(2);
  }
  CHECK(r.done);
  CHECK(r.reward == 1.0f);
  CHECK(env.episode_steps() == 9);
  env.reset_to(0);
  for (int t = 0; t < 9; ++t) r = env.step(2);
  CHECK(r.reward == -1.0f);
  CHECK_THROWS_AS(env.step(3), ConfigError);
}

TEST_CASE("catch: tracking the ball always wins") {
  EnvSpec s;
  s.seed = 3;
  Catch env(s);
  for (int ep = 0; ep < 50; ++ep) {
    env.reset();
    StepResult r;
    while (!r.done) {
      const int a = env.ball_column() < env.paddle_column()
                        ? 0
                        : (env.ball_column() > env.paddle_column() ? 2 : 1);
      r = env.step(a);
    }
    CHECK(r.reward == 1.0f);
  }
}

TEST_CASE("catch is reproducible per seed") {
  EnvSpec s;
  s.seed = 9;
  Catch a(s), b(s);
  for (int i = 0; i < 20; ++i) CHECK(a.reset() == b.reset());
}

TEST_CASE("chain: always right returns 1 after N-1 steps") {
  EnvSpec s = EnvSpec::defaults(EnvKind::kChain);
  Chain env(s);
  env.reset();
  StepResult r;
  int steps = 0;
  while (!r.done) {
    r = env.step(1);
    ++steps;
  }
  CHECK(steps == 4);
  CHECK(r.reward == 1.0f);
}

TEST_CASE("chain: episode cap") {
  EnvSpec s = EnvSpec::defaults(EnvKind::kChain);
  Chain env(s);
  env.reset();
  StepResult r;
  int steps = 0;
  while (!r.done) {
    r = env.step(0);
    ++steps;
  }
  CHECK(steps == 10);
  CHECK(r.reward == 0.0f);
}

TEST_CASE("grid: shortest path and walls") {
  EnvSpec s = EnvSpec::defaults(EnvKind::kGrid);
  Grid env(s);
  env.reset();
  env.step(0);
  env.step(2);
  CHECK(env.cell() == 0);
  StepResult r;
  for (int i = 0; i < 4; ++i) r = env.step(3);
  for (int i = 0; i < 4; ++i) r = env.step(1);
  CHECK(r.done);
  CHECK(r.reward == 1.0f);
  CHECK(env.episode_steps() == 10);
}

TEST_CASE("oracle Q on the chain") {
  EnvSpec s = EnvSpec::defaults(EnvKind::kChain);
  const auto q = oracle_q(s, 0.99);
  CHECK(q[0 * 2 + 1] == doctest::Approx(0.970299).epsilon(1e-9));
  for (std::size_t st = 0; st + 1 < 5; ++st) {
    const double v = std::max(q[st * 2], q[st * 2 + 1]);
    CHECK(v == doctest::Approx(best_return(5, st, 30, 0.99)).epsilon(1e-9));
  }
  CHECK(q[4 * 2] == 0.0);
}

TEST_CASE("oracle Q: two-state chain fixed point") {
  EnvSpec s = EnvSpec::defaults(EnvKind::kChain);
  s.chain_length = 2;
  const double g = 0.9;
  const auto q = oracle_q(s, g);
  CHECK(q[1] == doctest::Approx(1.0));
  CHECK(q[0] == doctest::Approx(g * std::max(q[0], q[1])));
}

TEST_CASE("oracle Q on the grid") {
  EnvSpec s = EnvSpec::defaults(EnvKind::kGrid);
  const double g = 0.9;
  const auto q = oracle_q(s, g);
  // Manhattan distance 8 from the start.
  CHECK(std::max({q[0], q[1], q[2], q[3]}) == doctest::Approx(std::pow(g, 7)));
  CHECK_THROWS_AS(oracle_q(EnvSpec{}, g), ConfigError);
}

TEST_CASE("spec validation and factory") {
  EnvSpec s;
  s.height = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK(make_env(EnvSpec::defaults(EnvKind::kGrid))->spec().obs_dim() == 25);
  CHECK(parse_env_kind("chain") == EnvKind::kChain);
  CHECK_THROWS_AS(parse_env_kind("pong"), ConfigError);
}

}  // TEST_SUITE
