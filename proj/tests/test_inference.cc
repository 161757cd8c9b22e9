#include <cmath>

#include "doctest.h"
#include "seedling/error.h"
#include "seedling/inference.h"
#include "seedling/qlearn.h"
#include "seedling/trainer.h"

using namespace seedling;
using namespace seedling::learner;

namespace {

RunConfig small_config(Algo algo) {
  RunConfig c;
  c.algo = algo;
  c.env = envs::EnvSpec::defaults(envs::EnvKind::kChain);
  c.mlp_hidden = {8};
  c.lstm_units = 6;
  c.dueling_hidden = 5;
  c.unroll_length = 4;
  c.batch_size = 2;
  c.q.sequence_length = 6;
  c.q.burn_in = 2;
  c.q.sequence_overlap = 3;
  c.q.n_steps = 2;
  return c;
}

struct Rig {
  RunConfig cfg;
  nn::Network net;
  nn::SnapshotCell cell;
  std::vector<Trajectory> out;
  InferenceEngine engine;

  explicit Rig(RunConfig c, bool publish = true)
      : cfg(std::move(c)),
        net(cfg.network_spec()),
        engine(cfg, net, cell, [this](Trajectory&& t) { out.push_back(std::move(t)); }) {
    if (publish) {
      cell.publish(std::make_shared<const nn::ParamSnapshot>(net.init_params(3)));
    }
  }

  // One request for (conn, env) with a one-hot chain observation.
  std::optional<std::uint32_t> step(std::uint64_t conn, std::uint32_t env,
                                    std::size_t state, float reward, bool done) {
    wire::StepRequest r;
    r.env_id = env;
    r.reward = reward;
    r.done = done ? 1 : 0;
    r.obs.assign(cfg.env.obs_dim(), 0.0f);
    r.obs[state] = 1.0f;
    InferenceItem item{conn, &r};
    return engine.serve(std::span(&item, 1))[0];
  }

  std::size_t accounted() const {
    const auto c = engine.counters();
    return c.records_emitted - c.records_overlap + engine.open_records() +
           c.records_discarded;
  }
};

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("not ready without a snapshot") {
  Rig rig(small_config(Algo::kVTrace), false);
  rig.engine.register_actor(1, 0, 1);
  CHECK_THROWS_AS(rig.step(1, 0, 0, 0, true), NotReadyError);
}

TEST_CASE("unknown slots and bad observations are rejected") {
  Rig rig(small_config(Algo::kVTrace));
  CHECK_FALSE(rig.step(1, 0, 0, 0, true).has_value());
  rig.engine.register_actor(1, 0, 2);
  CHECK_FALSE(rig.step(1, 2, 0, 0, true).has_value());
  wire::StepRequest bad{0, 0.0f, 1, {1.0f}};
  InferenceItem item{1, &bad};
  CHECK_FALSE(rig.engine.serve(std::span(&item, 1))[0].has_value());
  CHECK(rig.engine.counters().rejected == 3);
  CHECK(rig.step(1, 1, 0, 0, true).has_value());
}

TEST_CASE("the fifth step of unroll 4 completes a trajectory") {
  Rig rig(small_config(Algo::kVTrace));
  rig.engine.register_actor(1, 0, 1);
  for (int t = 0; t < 4; ++t) {
    rig.step(1, 0, static_cast<std::size_t>(t % 3), 0.0f, t == 0);
    CHECK(rig.out.empty());
  }
  rig.step(1, 0, 3, 0.5f, false);
  REQUIRE(rig.out.size() == 1);
  const Trajectory t = rig.out[0];
  CHECK(t.records() == 5);
  CHECK(t.steps() == 4);
  CHECK(t.done_in[0] == 1);
  CHECK(t.step_reward(3) == 0.5f);
  CHECK(t.obs_at(4)[3] == 1.0f);
  CHECK(t.prev_action[0] == -1);
  for (std::size_t i = 1; i < 5; ++i) CHECK(t.prev_action[i] == t.action[i - 1]);
  CHECK(rig.engine.open_records() == 1);
  CHECK(rig.accounted() == 5);
  // The next trajectory starts with the bootstrap record.
  for (int k = 0; k < 4; ++k) rig.step(1, 0, 0, 0.0f, false);
  REQUIRE(rig.out.size() == 2);
  CHECK(rig.out[1].action[0] == t.action[4]);
  CHECK(rig.out[1].obs_at(0)[3] == 1.0f);
  CHECK(rig.accounted() == rig.engine.counters().requests);
}

TEST_CASE("recorded behaviour and state match a replayed forward") {
  Rig rig(small_config(Algo::kVTrace));
  rig.engine.register_actor(7, 2, 1);
  std::size_t pos = 0;
  for (int k = 0; k < 13; ++k) {
    const bool done = k == 0 || k == 6;
    if (done) pos = 0;
    const auto a = rig.step(7, 0, pos, done ? 1.0f : 0.0f, done);
    pos = *a == 1 ? std::min<std::size_t>(pos + 1, 3) : (pos > 0 ? pos - 1 : 0);
  }
  REQUIRE(rig.out.size() == 3);
  const auto snap = rig.cell.load();
  nn::RecurrentState st = rig.out[0].initial_state;
  CHECK(st.hidden == nn::RecurrentState::zeros(1, 6).hidden);
  for (const Trajectory& t : rig.out) {
    CHECK(t.actor_id == 2);
    CHECK(t.initial_state.hidden == st.hidden);
    for (std::size_t i = 0; i < t.records(); ++i) {
      nn::StepInput in{1, {t.obs_at(i), t.obs_dim}, {&t.prev_action[i], 1},
                       {&t.reward_in[i], 1}, {&t.done_in[i], 1}};
      const auto out = rig.net.forward(*snap, in, st);
      for (std::size_t a = 0; a < t.num_actions; ++a) {
        CHECK(out.head.data[a] == t.behavior_at(i)[a]);
      }
      if (i + 1 < t.records()) st = out.next;
    }
  }
}

TEST_CASE("replay sequences overlap") {
  RunConfig cfg = small_config(Algo::kR2D2);
  Rig rig(cfg);
  rig.engine.register_actor(1, 0, 1);
  // 7 records per sequence, 4 carried over: emits at 7, 10, 13, ...
  for (int k = 0; k < 16; ++k) rig.step(1, 0, 0, 0.0f, k == 0);
  REQUIRE(rig.out.size() == 4);
  CHECK(rig.out[0].records() == 7);
  CHECK(rig.engine.carried_records() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rig.out[1].action[i] == rig.out[0].action[3 + i]);
    CHECK(rig.out[1].version[i] == rig.out[0].version[3 + i]);
  }
  CHECK(rig.accounted() == 16);
}

TEST_CASE("dropping an actor discards its open records") {
  Rig rig(small_config(Algo::kVTrace));
  rig.engine.register_actor(1, 0, 2);
  for (int k = 0; k < 3; ++k) {
    rig.step(1, 0, 0, 0.0f, k == 0);
    rig.step(1, 1, 0, 0.0f, k == 0);
  }
  rig.engine.drop_actor(1);
  CHECK_FALSE(rig.engine.registered(1));
  CHECK(rig.engine.counters().records_discarded == 6);
  CHECK(rig.accounted() == 6);
  CHECK_FALSE(rig.step(1, 0, 0, 0.0f, false).has_value());
}

TEST_CASE("episode returns include the terminal reward") {
  Rig rig(small_config(Algo::kVTrace));
  rig.engine.register_actor(1, 0, 1);
  rig.step(1, 0, 0, 0.0f, true);
  rig.step(1, 0, 1, 0.0f, false);
  rig.step(1, 0, 0, 1.0f, true);
  CHECK(rig.engine.finished_episodes() == 1);
  CHECK(rig.engine.mean_recent_return() == 1.0);
}

TEST_CASE("epsilon streams") {
  RunConfig cfg = small_config(Algo::kR2D2);
  Rig rig(cfg);
  CHECK(rig.engine.epsilon_of(0, 16, 0) == 0.4);
  CHECK(rig.engine.epsilon_of(1, 16, 0) == 0.4);
  CHECK(rig.engine.epsilon_of(0, 16, 15) == doctest::Approx(std::pow(0.4, 8)));
  cfg.eval_epsilon = 0.001;
  Rig eval(cfg);
  CHECK(eval.engine.epsilon_of(0, 16, 0) == 0.001);
}

TEST_CASE("trainer: target network sync and zero-signal updates") {
  RunConfig cfg = small_config(Algo::kR2D2);
  cfg.q.target_update_interval = 3;
  Rig rig(cfg);
  rig.engine.register_actor(1, 0, 1);
  for (int k = 0; k < 40; ++k) rig.step(1, 0, k % 4, k % 5 == 0 ? 1.0f : 0.0f, k % 5 == 0);
  Trainer trainer(cfg, rig.net, *rig.cell.load());
  replay::SampledBatch b;
  for (std::size_t i = 0; i < 2; ++i) {
    b.sequences.push_back(std::make_shared<const Trajectory>(rig.out[i]));
    b.ids.push_back(i);
    b.weights.push_back(1.0);
    b.probabilities.push_back(0.5);
  }
  for (int u = 1; u <= 3; ++u) {
    const auto m = trainer.train_q(b);
    CHECK(m.applied);
    CHECK(m.priorities.size() == 2);
    CHECK(m.version == static_cast<std::uint64_t>(u));
    if (u < 3) CHECK_FALSE(trainer.target()->tensors == trainer.params()->tensors);
  }
  CHECK(trainer.target_syncs() == 1);
  CHECK(trainer.target()->tensors == trainer.params()->tensors);
}

TEST_CASE("trainer: v-trace with no learning signal keeps parameters") {
  RunConfig cfg = small_config(Algo::kVTrace);
  cfg.vtrace.entropy_coefficient = 0.0;
  cfg.vtrace.value_coefficient = 0.0;
  Rig rig(cfg);
  rig.engine.register_actor(1, 0, 2);
  for (int k = 0; k < 5; ++k) {
    rig.step(1, 0, 0, 0.0f, k == 0);
    rig.step(1, 1, 0, 0.0f, k == 0);
  }
  REQUIRE(rig.out.size() == 2);
  // Rewards zero and a zero value head give zero advantages everywhere.
  nn::ParamSnapshot p = *rig.cell.load();
  for (std::size_t i = 0; i < p.names.size(); ++i) {
    if (p.names[i].rfind("value/", 0) == 0) p.tensors[i].fill(0.0f);
  }
  Trainer trainer(cfg, rig.net, p);
  const auto m = trainer.train_vtrace(rig.out);
  CHECK(m.applied);
  CHECK(m.grad_norm == 0.0);
  CHECK(trainer.params()->version == p.version + 1);
  CHECK(trainer.params()->tensors == p.tensors);
}

TEST_CASE("trainer: v-trace loss decreases on a fixed batch") {
  RunConfig cfg = small_config(Algo::kVTrace);
  cfg.learning_rate = 1e-2;
  Rig rig(cfg);
  rig.engine.register_actor(1, 0, 2);
  for (int k = 0; k < 5; ++k) {
    rig.step(1, 0, k % 4, k == 3 ? 1.0f : 0.0f, k == 0 || k == 3);
    rig.step(1, 1, 0, 0.0f, k == 0);
  }
  Trainer trainer(cfg, rig.net, *rig.cell.load());
  const double first = trainer.train_vtrace(rig.out).baseline_loss;
  double last = first;
  for (int i = 0; i < 30; ++i) last = trainer.train_vtrace(rig.out).baseline_loss;
  CHECK(last < first);
}

}  // TEST_SUITE
