#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "seedling/envs.h"
#include "seedling/stats.h"

namespace seedling::actor {

struct ActorConfig {
  std::string learner = "127.0.0.1:4000";
  std::uint32_t actor_id = 0;
  std::uint32_t num_envs = 16;
  envs::EnvSpec env;
  std::uint64_t seed = 1;
  std::uint64_t frame_budget = 0;  // 0 = until the learner shuts down
  double duration_s = 0.0;         // 0 = no time limit
  double warmup_s = 0.0;           // latency samples start after this
  std::chrono::milliseconds backoff_base{100};
  std::chrono::milliseconds backoff_cap{5000};
  // Give up after this long without a successful connection (0 = never).
  double connect_give_up_s = 30.0;
  bool record_transcript = false;
  const std::atomic<bool>* cancel = nullptr;

  void validate() const;
};

struct TranscriptEntry {
  std::uint32_t env_id = 0;
  std::vector<float> obs;
  float reward = 0.0f;
  std::uint8_t done = 0;
  std::uint32_t action = 0;
};

struct ActorStats {
  std::uint64_t requests = 0;   // StepRequests sent
  std::uint64_t responses = 0;  // ActionResponses received
  std::uint64_t episodes = 0;
  double mean_return = 0.0;     // over all finished episodes
  std::uint64_t connects = 0;
  double elapsed_s = 0.0;
  double fps = 0.0;             // responses per second after warmup
  Percentiles latency_ms;       // send to response, after warmup
  std::vector<double> latency_samples;
  std::string exit_reason;
  std::vector<TranscriptEntry> transcript;
};

std::string to_json(const ActorStats& s);

// Seed of environment `env_id` of actor `actor_id`.
std::uint64_t env_seed(std::uint64_t base, std::uint32_t actor_id,
                       std::uint32_t env_id);

// Hosts num_envs environments on one connection, each in lock-step with the
// learner. Returns when the frame budget or duration is used up, the learner
// sends a shutdown error, or no connection can be made.
ActorStats run_actor(const ActorConfig& config);

}  // namespace seedling::actor
