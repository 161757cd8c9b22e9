#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seedling/envs.h"
#include "seedling/nn.h"
#include "seedling/qlearn.h"
#include "seedling/replay.h"
#include "seedling/vtrace.h"

namespace seedling {

enum class Algo { kVTrace, kR2D2 };

Algo parse_algo(const std::string& name);
std::string algo_name(Algo algo);

// Full experiment configuration. Values left unset fall back to the
// per-algorithm defaults returned by the effective_*() accessors.
struct RunConfig {
  Algo algo = Algo::kVTrace;
  envs::EnvSpec env;
  std::string listen = "127.0.0.1:0";

  std::vector<std::size_t> mlp_hidden{64};
  std::size_t lstm_units = 64;
  std::size_t dueling_hidden = 64;

  std::size_t unroll_length = 32;
  std::size_t batch_size = 32;
  std::size_t inference_batch_size = 32;
  std::uint64_t inference_timeout_us = 1000;
  std::uint64_t total_frames = 0;  // 0 = run until stopped

  std::optional<double> learning_rate;
  std::optional<double> adam_epsilon;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  std::optional<double> gradient_clip;

  vtrace::VTraceConfig vtrace;
  qlearn::QConfig q;
  std::size_t replay_capacity = 2000;
  std::size_t replay_min_size = 100;
  std::size_t queue_capacity = 0;  // 0 = 4 x batch_size
  replay::OverflowPolicy queue_policy = replay::OverflowPolicy::kBlock;

  std::size_t inference_workers = 2;
  std::size_t prefetch_workers = 2;
  // Number of exploration streams for the epsilon schedule; slot index is
  // actor_id * num_envs + env_id modulo this.
  std::size_t exploration_streams = 16;
  std::optional<double> eval_epsilon;

  bool train = true;
  bool retain_snapshots = false;
  std::size_t retained_trajectories = 0;
  std::string checkpoint;
  std::string restore;  // start from this checkpoint instead of a fresh init
  std::string metrics;
  double metrics_interval_s = 1.0;
  std::uint64_t seed = 1;

  double effective_learning_rate() const;
  double effective_adam_epsilon() const;
  double effective_gradient_clip() const;
  std::size_t effective_queue_capacity() const;
  nn::NetworkSpec network_spec() const;

  // Throws ConfigError describing the first inconsistency.
  void validate() const;

  // Applies one key=value setting. Throws ConfigError on an unknown key or
  // malformed value.
  void set(const std::string& key, const std::string& value);
  // Flat "key = value" text; '#' starts a comment.
  void apply_text(const std::string& text);
  void load_file(const std::string& path);
  // Every key understood by set(), with its current value.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

}  // namespace seedling
