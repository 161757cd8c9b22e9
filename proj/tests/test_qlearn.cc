#include <cmath>
#include <random>

#include "doctest.h"
#include "seedling/error.h"
#include "seedling/qlearn.h"

using namespace seedling;
using namespace seedling::qlearn;

TEST_SUITE("qlearn") {

TEST_CASE("rescale known values") {
  CHECK(rescale(3.0) == doctest::Approx(1.003).epsilon(1e-12));
  CHECK(rescale(0.0) == 0.0);
  CHECK(rescale(-3.0) == doctest::Approx(-1.003).epsilon(1e-12));
  CHECK(rescale_inverse(1.003) == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("rescale is odd, increasing and invertible") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x(-1e4, 1e4);
  double prev_x = -1e4, prev_h = rescale(-1e4);
  std::vector<double> xs;
  for (int i = 0; i < 20000; ++i) xs.push_back(x(rng));
  std::sort(xs.begin(), xs.end());
  for (double v : xs) {
    CHECK(std::abs(rescale_inverse(rescale(v)) - v) <= 1e-5);
    CHECK(rescale(-v) == doctest::Approx(-rescale(v)));
    if (v > prev_x) CHECK(rescale(v) > prev_h);
    prev_x = v;
    prev_h = rescale(v);
  }
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    CHECK(std::abs(rescale_inverse(rescale(123.4, eps), eps) - 123.4) <= 1e-6);
  }
}

TEST_CASE("epsilon schedule") {
  CHECK(epsilon_for_actor(0, 16) == 0.4);
  CHECK(epsilon_for_actor(0, 1) == 0.4);
  CHECK(epsilon_for_actor(15, 16) == doctest::Approx(std::pow(0.4, 8.0)));
  for (std::size_t i = 1; i < 16; ++i) {
    CHECK(epsilon_for_actor(i, 16) < epsilon_for_actor(i - 1, 16));
  }
  CHECK_THROWS_AS(epsilon_for_actor(16, 16), ConfigError);
}

TEST_CASE("sequence priority mixes max and mean") {
  std::vector<double> td{1.0, 3.0, 2.0};
  CHECK(sequence_priority(td, 0.9) == doctest::Approx(0.9 * 3 + 0.1 * 2));
  CHECK(sequence_priority(td, 1.0) == doctest::Approx(3.0));
  CHECK(sequence_priority(td, 0.0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(sequence_priority({}, 0.9), ConfigError);
}

TEST_CASE("n-step double-Q targets match a product-form oracle") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  std::bernoulli_distribution done(0.2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = 3 + trial % 8, A = 3;
    QConfig cfg;
    cfg.n_steps = 1 + trial % 5;
    cfg.discount = 0.97;
    std::vector<float> r(L);
    std::vector<std::uint8_t> d(L);
    for (std::size_t t = 0; t < L; ++t) {
      r[t] = static_cast<float>(n01(rng));
      d[t] = done(rng);
    }
    Tensor online({L + 1, A}), target({L + 1, A});
    for (float& v : online.data) v = static_cast<float>(n01(rng));
    for (float& v : target.data) v = static_cast<float>(n01(rng));
    const std::size_t first = trial % 2;
    const auto got = nstep_double_q_targets({r, d, &online, &target}, first, cfg);
    REQUIRE(got.size() == L - first);
    for (std::size_t t = first; t < L; ++t) {
      const std::size_t m = std::min(cfg.n_steps, L - t);
      double g = 0.0, alive = 1.0;
      for (std::size_t k = 0; k < m; ++k) {
        g += std::pow(cfg.discount, static_cast<double>(k)) * alive * r[t + k];
        alive *= 1.0 - d[t + k];
      }
      std::size_t best = 0;
      for (std::size_t a = 1; a < A; ++a) {
        if (online.data[(t + m) * A + a] > online.data[(t + m) * A + best]) best = a;
      }
      g += std::pow(cfg.discount, static_cast<double>(m)) * alive *
           rescale_inverse(target.data[(t + m) * A + best]);
      CHECK(got[t - first] == doctest::Approx(rescale(g)).epsilon(1e-12));
    }
  }
}

TEST_CASE("burn-in unroll equals the full forward at the burn-in index") {
  nn::NetworkSpec spec;
  spec.input_dim = 4;
  spec.mlp_hidden_sizes = {6};
  spec.lstm_units = 5;
  spec.head = nn::HeadKind::kDuelingQ;
  spec.num_actions = 3;
  nn::Network net(spec);
  const auto p = net.init_params(4);
  Trajectory seq;
  seq.obs_dim = 4;
  seq.num_actions = 3;
  const std::size_t R = 9, burn = 5;
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n01;
  for (std::size_t t = 0; t < R; ++t) {
    for (int k = 0; k < 4; ++k) seq.obs.push_back(n01(rng));
    seq.reward_in.push_back(n01(rng));
    seq.done_in.push_back(t == 3);
    seq.prev_action.push_back(static_cast<std::int32_t>(t % 3));
    seq.action.push_back(static_cast<std::int32_t>((t + 1) % 3));
  }
  seq.initial_state = nn::RecurrentState::zeros(1, 5);
  seq.initial_state.hidden.fill(0.2f);
  const auto warmed = burn_in_unroll(net, p, seq, burn);
  nn::RecurrentState st = seq.initial_state;
  for (std::size_t t = 0; t < R; ++t) {
    if (t == burn) {
      CHECK(st.hidden == warmed.hidden);
      CHECK(st.cell == warmed.cell);
    }
    nn::StepInput in{1, {seq.obs_at(t), 4}, {&seq.prev_action[t], 1},
                     {&seq.reward_in[t], 1}, {&seq.done_in[t], 1}};
    st = net.forward(p, in, st).next;
  }
  CHECK_THROWS_AS(burn_in_unroll(net, p, seq, R), ConfigError);
}

TEST_CASE("config validation") {
  QConfig c;
  c.validate();
  c.burn_in = c.sequence_length;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = QConfig{};
  c.n_steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = QConfig{};
  c.priority_exponent = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

}  // TEST_SUITE
