#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"

#include "seedling/actor.h"

namespace {

std::atomic<bool> g_cancel{false};

void on_signal(int) { g_cancel = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seedling actor: environments stepped in lock-step with a learner"};
  seedling::actor::ActorConfig cfg;
  std::string env = "catch", stats_json, latency_out, transcript_out;
  std::uint32_t id = 0;
  app.add_option("--learner", cfg.learner, "learner address (HOST:PORT or unix:PATH)");
  app.add_option("--id", id, "actor id");
  app.add_option("--num-envs", cfg.num_envs, "environments hosted by this actor");
  app.add_option("--env", env, "catch, chain or grid");
  app.add_option("--frames", cfg.frame_budget, "total StepRequests to send (0 = unlimited)");
  app.add_option("--seed", cfg.seed, "environment seed");
  app.add_option("--duration", cfg.duration_s, "stop after this many seconds");
  app.add_option("--warmup", cfg.warmup_s, "ignore latency during the first seconds");
  app.add_option("--give-up", cfg.connect_give_up_s,
                 "exit after this many seconds without a connection (0 = never)");
  app.add_option("--stats-json", stats_json, "write final statistics here");
  app.add_option("--latency-out", latency_out, "write raw latency samples (f64, ms)");
  app.add_option("--transcript", transcript_out, "write (env, obs, action) lines here");
  CLI11_PARSE(app, argc, argv);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::signal(SIGPIPE, SIG_IGN);

  seedling::actor::ActorStats stats;
  try {
    cfg.actor_id = id;
    cfg.env = seedling::envs::EnvSpec::defaults(seedling::envs::parse_env_kind(env));
    cfg.cancel = &g_cancel;
    cfg.record_transcript = !transcript_out.empty();
    stats = seedling::actor::run_actor(cfg);
  } catch (const std::exception& e) {
    std::cerr << "seedling-actor: " << e.what() << '\n';
    return 1;
  }

  const std::string summary = seedling::actor::to_json(stats);
  if (!stats_json.empty()) {
    std::ofstream(stats_json) << summary << '\n';
  } else {
    std::cout << summary << std::endl;
  }
  if (!latency_out.empty()) {
    std::ofstream f(latency_out, std::ios::binary);
    for (double v : stats.latency_samples) {
      f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!transcript_out.empty()) {
    std::ofstream f(transcript_out);
    for (const auto& t : stats.transcript) {
      f << t.env_id << ' ' << t.action;
      for (float x : t.obs) f << ' ' << x;
      f << '\n';
    }
  }
  return stats.exit_reason == "learner unreachable" ? 3 : 0;
}
