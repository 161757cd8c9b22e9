// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. `--only 3,5` runs a subset.

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oracle/cost_rows.h"
#include "oracle/gradcheck.h"
#include "oracle/reference.h"
#include "oracle/sampling.h"
#include "oracle/wire_fuzz.h"
#include "seedling/actor.h"
#include "seedling/bench.h"
#include "seedling/envs.h"
#include "seedling/learner.h"
#include "seedling/qlearn.h"
#include "seedling/vtrace.h"

using namespace seedling;
namespace fs = std::filesystem;

extern char** environ;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Child processes

struct Child {
  pid_t pid = -1;
};

Child spawn(const std::vector<std::string>& argv, const std::string& out_path) {
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, STDOUT_FILENO, out_path.c_str(),
                                   O_WRONLY | O_CREAT | O_TRUNC, 0644);
  const std::string err = out_path + ".err";
  posix_spawn_file_actions_addopen(&fa, STDERR_FILENO, err.c_str(),
                                   O_WRONLY | O_CREAT | O_TRUNC, 0644);
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  Child c;
  const int rc = posix_spawn(&c.pid, args[0], &fa, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&fa);
  if (rc != 0) throw std::runtime_error("cannot start " + argv[0]);
  return c;
}

int join(const Child& c) {
  int status = 0;
  waitpid(c.pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  return nlohmann::json::parse(f);
}

// One learner process and two actor processes with eight environments each.
// Returns the learner's final summary.
nlohmann::json run_topology(const std::string& tag, const std::string& env,
                            std::vector<std::string> learner_args) {
  const std::string sock = (fs::current_path() / ("acc_" + tag + ".sock")).string();
  std::vector<std::string> largs{SEEDLING_LEARNER_BIN, "--env", env, "--listen",
                                 "unix:" + sock};
  largs.insert(largs.end(), learner_args.begin(), learner_args.end());
  const Child learner = spawn(largs, "acc_" + tag + ".json");
  std::vector<Child> actors;
  for (int id = 0; id < 2; ++id) {
    actors.push_back(spawn({SEEDLING_ACTOR_BIN, "--learner", "unix:" + sock, "--id",
                            std::to_string(id), "--num-envs", "8", "--env", env,
                            "--give-up", "10"},
                           "acc_" + tag + "_actor" + std::to_string(id) + ".json"));
  }
  const int rc = join(learner);
  for (const auto& a : actors) join(a);
  if (rc != 0) throw std::runtime_error("learner exited with status " + std::to_string(rc));
  return read_json("acc_" + tag + ".json");
}

// ---------------------------------------------------------------------------
// Criteria

Outcome cost_model() {
  double worst_impala = 0.0, worst_central = 0.0;
  for (const auto& row : oracle::cost_rows()) {
    const double usd = bench::cost_per_billion(row.fps, row.cpus, {row.accel});
    const double err = std::abs(usd - row.stated_usd) / row.stated_usd;
    (row.central ? worst_central : worst_impala) = std::max(row.central ? worst_central : worst_impala, err);
  }
  return {worst_impala <= 0.05 && worst_central <= 0.15,
          fmt("worst relative error: impala rows %.4f (<= 0.05), central rows %.4f (<= 0.15)",
              worst_impala, worst_central)};
}

Outcome gradients() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::size_t lstm = 0, dueling = 0, checked = 0, kinks = 0;
  for (int i = 0; i < 50; ++i) {
    const auto spec = oracle::random_tiny_spec(rng, 500);
    lstm += spec.lstm_units > 0;
    dueling += spec.head == nn::HeadKind::kDuelingQ;
    const auto r = oracle::check_gradients(spec, 500 + i, 3, 2);
    worst = std::max(worst, r.max_rel_err);
    checked += r.checked;
    kinks += r.kinks;
  }
  return {worst <= 1e-3 && lstm > 0 && dueling > 0,
          fmt("50 nets (%zu with LSTM, %zu dueling), %zu coordinates, %zu at ReLU kinks; "
              "max relative error %.2e (<= 1e-3)",
              lstm, dueling, checked, kinks, worst)};
}

vtrace::VTraceInputs random_instance(std::mt19937_64& rng, std::size_t T, bool on_policy) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> logp(-3.0, -0.05);
  std::bernoulli_distribution done(0.15);
  vtrace::VTraceInputs in;
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

Outcome vtrace_oracles() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> len(1, 10);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double on = 0.0, off = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t T = len(rng);
    vtrace::VTraceConfig cfg;
    cfg.discount = 0.9 + 0.1 * unit(rng);
    cfg.lambda = unit(rng);
    const auto in = random_instance(rng, T, true);
    const auto out = vtrace::vtrace_targets(in, cfg);
    const auto ref = oracle::lambda_returns(in.reward, in.done, in.value, in.bootstrap_value,
                                            cfg.discount, cfg.lambda);
    for (std::size_t t = 0; t < T; ++t) on = std::max(on, std::abs(out.vs[t] - ref[t]));
  }
  for (int i = 0; i < 1000; ++i) {
    const std::size_t T = len(rng);
    vtrace::VTraceConfig cfg;
    cfg.discount = 0.9 + 0.1 * unit(rng);
    cfg.lambda = unit(rng);
    cfg.rho_bar = 0.5 + 2.0 * unit(rng);
    cfg.c_bar = std::min(cfg.rho_bar, 0.5 + 2.0 * unit(rng));
    const auto in = random_instance(rng, T, false);
    const auto out = vtrace::vtrace_targets(in, cfg);
    const auto ref = oracle::vtrace_by_definition(
        in.behavior_log_prob, in.target_log_prob, in.reward, in.done, in.value,
        in.bootstrap_value, cfg.discount, cfg.lambda, cfg.rho_bar, cfg.c_bar);
    for (std::size_t t = 0; t < T; ++t) {
      off = std::max(off, std::abs(out.vs[t] - ref.vs[t]));
      off = std::max(off, std::abs(out.pg_advantages[t] - ref.pg[t]));
    }
  }
  return {on <= 1e-5 && off <= 1e-6,
          fmt("1000 on-policy instances max error %.2e (<= 1e-5), 1000 off-policy %.2e (<= 1e-6)",
              on, off)};
}

Outcome rescaling() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> x(-1e4, 1e4);
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double v = x(rng);
    worst = std::max(worst, std::abs(qlearn::rescale_inverse(qlearn::rescale(v)) - v));
  }
  const double h3 = qlearn::rescale(3.0);
  bool eps0 = true;
  for (std::size_t n : {1, 2, 8, 16, 256}) eps0 = eps0 && qlearn::epsilon_for_actor(0, n) == 0.4;
  return {worst <= 1e-5 && h3 == 1.003 && eps0,
          fmt("roundtrip max error %.2e (<= 1e-5), rescale(3) = %.17g, epsilon(0, n) = 0.4: %s",
              worst, h3, eps0 ? "yes" : "no")};
}

Outcome sampling() {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> pr(0.01, 5.0);
  double worst = 0.0, min_p = 1.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> p(std::uniform_int_distribution<std::size_t>(2, 64)(rng));
    for (double& v : p) v = pr(rng);
    const auto fit = oracle::fit_sampling(p, 0.9, 100000, 300 + trial);
    worst = std::max(worst, fit.max_abs_freq_err);
    min_p = std::min(min_p, fit.p_value);
  }
  const double drift = oracle::tree_drift(100000, 17);
  return {worst <= 0.02 && min_p > 0.001 && drift <= 1e-3,
          fmt("5 priority vectors x 100k draws: max |freq - p| %.4f (<= 0.02), min chi-square p "
              "%.4f (> 0.001); root drift after 1e5 operations %.2e (<= 1e-3)",
              worst, min_p, drift)};
}

Outcome protocol() {
  const auto fuzz = oracle::fuzz_roundtrip(100000, 19, 100000);
  const auto load = oracle::batcher_load(10, 4, 1000, 16);
  const bool batcher_ok = load.submitted == 10000 && load.answered == 10000 &&
                          load.duplicates == 0 && load.order_violations == 0;
  return {fuzz.mismatches == 0 && fuzz.streaming_equal && batcher_ok,
          fmt("%zu fuzzed messages, %zu mismatches, byte-at-a-time equal: %s; batcher "
              "answered %zu of %zu, %zu duplicates, %zu order violations",
              fuzz.messages, fuzz.mismatches, fuzz.streaming_equal ? "yes" : "no",
              load.answered, load.submitted, load.duplicates, load.order_violations)};
}

Outcome vtrace_learning() {
  const auto t0 = std::chrono::steady_clock::now();
  // Batch 16 doubles the update count of the default batch of 32 over the
  // same frames; at 32 the final return varies between 0.78 and 1.0 by seed.
  const auto s = run_topology("c7", "catch", {"--frames", "500000", "--batch", "16"});
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double ret = s.at("mean_return_100");
  return {ret >= 0.9, fmt("catch, %llu frames, %llu updates: mean return over last 100 episodes "
                          "%.3f (>= 0.9), %.0f s",
                          s.at("frames").get<unsigned long long>(),
                          s.at("updates").get<unsigned long long>(), ret, secs)};
}

// Scaled-down replay settings for a desk-sized run.
std::string write_r2d2_config() {
  const std::string path = "acc_r2d2.cfg";
  std::ofstream f(path);
  f << "algo = r2d2\n"
       "sequence_length = 20\n"
       "burn_in = 8\n"
       "sequence_overlap = 10\n"
       "replay_buffer_size = 2000\n"
       "min_replay_buffer_size = 100\n"
       "training_batch_size = 8\n";
  return path;
}

// Greedy Q-values along the always-right path of the chain, compared with
// value iteration.
double chain_q_error(const std::string& ckpt, const std::string& cfg_path, std::string& table) {
  RunConfig cfg;
  cfg.load_file(cfg_path);
  cfg.env = envs::EnvSpec::defaults(envs::EnvKind::kChain);
  nn::Network net(cfg.network_spec());
  const nn::ParamSnapshot p = nn::load_checkpoint(ckpt);
  const auto oracle = envs::oracle_q(cfg.env, cfg.q.discount);
  envs::Chain env(cfg.env);
  auto obs = env.reset();
  auto st = nn::RecurrentState::zeros(1, cfg.lstm_units);
  std::int32_t prev = -1;
  float reward = 0.0f;
  std::uint8_t reset = 1;
  double worst = 0.0;
  for (std::size_t s = 0; s + 1 < cfg.env.chain_length; ++s) {
    nn::StepInput in{1, obs, std::span(&prev, 1), std::span(&reward, 1), std::span(&reset, 1)};
    const auto out = net.forward(p, in, st);
    for (std::size_t a = 0; a < 2; ++a) {
      const double q = qlearn::rescale_inverse(out.head.data[a], cfg.q.rescale_epsilon);
      worst = std::max(worst, std::abs(q - oracle[s * 2 + a]));
      table += fmt(" Q(%zu,%zu)=%.3f/%.3f", s, a, q, oracle[s * 2 + a]);
    }
    st = out.next;
    const auto r = env.step(1);
    obs = r.obs;
    prev = 1;
    reward = r.reward;
    reset = 0;
  }
  return worst;
}

Outcome r2d2_learning() {
  const std::string cfg = write_r2d2_config();
  const auto t0 = std::chrono::steady_clock::now();
  const auto train = run_topology("c8_catch", "catch",
                                  {"--config", cfg, "--frames", "1000000", "--checkpoint",
                                   "acc_c8_catch.ckpt"});
  // Training returns include the exploration of every epsilon stream; the
  // learned policy is read with near-greedy actors.
  const auto eval = run_topology("c8_eval", "catch",
                                 {"--config", cfg, "--frames", "20000", "--restore",
                                  "acc_c8_catch.ckpt", "--no-train", "--eval-epsilon", "0.001"});
  const auto chain = run_topology("c8_chain", "chain",
                                  {"--config", cfg, "--frames", "3000000", "--checkpoint",
                                   "acc_c8_chain.ckpt"});
  std::string table;
  const double q_err = chain_q_error("acc_c8_chain.ckpt", cfg, table);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double ret = eval.at("mean_return_100");
  return {ret >= 0.9 && q_err <= 0.05,
          fmt("catch 1M frames (training return %.3f, %llu target syncs): near-greedy return "
              "%.3f (>= 0.9); chain 3M frames: max |Q - Q*| %.4f (<= 0.05); %.0f s;",
              train.at("mean_return_100").get<double>(),
              train.at("target_syncs").get<unsigned long long>(), ret, q_err, secs) +
              table};
}

Outcome throughput() {
  bench::ThroughputConfig c;
  c.actors = 4;
  c.envs_per_actor = 16;
  c.actor_binary = SEEDLING_ACTOR_BIN;
  const auto r = bench::run_throughput_bench(c);
  bool batched_wins = true;
  std::string ratios;
  for (std::size_t hidden : {64, 256}) {
    bench::BenchSetup setup;
    setup.mlp_hidden = {hidden};
    setup.lstm_units = hidden;
    const auto local = bench::forward_report(setup, 100, 3, 1, "local", 0.5);
    for (std::size_t batch : {8, 16, 64}) {
      const auto central = bench::forward_report(setup, 100, 3, batch, "central", 0.5);
      const auto cmp = bench::compare_inference_modes(central, local);
      batched_wins = batched_wins && cmp.central_forward_ms < cmp.local_forward_ms;
      ratios += fmt(" h%zu/b%zu %.3f", hidden, batch, cmp.forward_ratio);
    }
  }
  return {r.fps >= 50000 && r.p50_ms <= 5.0 && batched_wins,
          fmt("4x16 envs: %.0f frames/s (>= 50000), p50 latency %.3f ms (<= 5), mean batch %.1f; "
              "batched/unbatched forward time per frame:",
              r.fps, r.p50_ms, r.mean_batch) +
              ratios};
}

Outcome single_copy() {
  RunConfig cfg;
  cfg.listen = "127.0.0.1:0";
  cfg.retain_snapshots = true;
  cfg.retained_trajectories = 100000;
  cfg.unroll_length = 16;
  cfg.batch_size = 4;
  learner::LearnerService svc(cfg);
  svc.start();
  std::vector<std::thread> actors;
  for (std::uint32_t id = 0; id < 2; ++id) {
    actors.emplace_back([&, id] {
      actor::ActorConfig a;
      a.learner = svc.address();
      a.actor_id = id;
      a.num_envs = 8;
      a.env = cfg.env;
      a.frame_budget = 15000;
      actor::run_actor(a);
    });
  }
  for (auto& t : actors) t.join();
  svc.stop();
  svc.wait();

  const auto trajs = svc.retained();
  double worst = 0.0;
  std::size_t missing = 0, decreasing = 0, increasing = 0, steps = 0;
  for (const Trajectory& t : trajs) {
    nn::RecurrentState st = t.initial_state;
    bool rises = false;
    for (std::size_t i = 0; i < t.records(); ++i) {
      if (i > 0 && t.version[i] < t.version[i - 1]) ++decreasing;
      if (i > 0 && t.version[i] > t.version[i - 1]) rises = true;
      const auto snap = svc.archive().get(t.version[i]);
      if (!snap) {
        ++missing;
        break;
      }
      nn::StepInput in{1, {t.obs_at(i), t.obs_dim}, {&t.prev_action[i], 1},
                       {&t.reward_in[i], 1}, {&t.done_in[i], 1}};
      const auto out = svc.network().forward(*snap, in, st);
      for (std::size_t a = 0; a < t.num_actions; ++a) {
        worst = std::max(worst, std::abs(double(out.head.data[a]) - t.behavior_at(i)[a]));
      }
      st = out.next;
      ++steps;
    }
    increasing += rises;
  }
  const auto s = svc.summary();
  return {!trajs.empty() && missing == 0 && worst <= 1e-6 && decreasing == 0 && increasing > 0,
          fmt("%zu trajectories, %zu steps replayed under %llu updates: max logit difference "
              "%.2e (<= 1e-6), missing snapshots %zu, version decreases %zu, trajectories "
              "spanning a version change %zu (> 0)",
              trajs.size(), steps, static_cast<unsigned long long>(s.updates), worst, missing,
              decreasing, increasing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seedling acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"cost model", cost_model},
      {"gradient correctness", gradients},
      {"v-trace oracles", vtrace_oracles},
      {"value rescaling", rescaling},
      {"prioritized sampling", sampling},
      {"protocol soundness", protocol},
      {"v-trace learning", vtrace_learning},
      {"r2d2 learning", r2d2_learning},
      {"throughput", throughput},
      {"single model copy", single_copy},
  };
  const std::set<int> wanted(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!wanted.empty() && !wanted.count(n)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("criterion %d (%s): %s [%.1f s] %s\n", n, criteria[i].first.c_str(),
                o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
