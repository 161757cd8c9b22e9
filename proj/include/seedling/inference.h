#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "seedling/config.h"
#include "seedling/nn.h"
#include "seedling/trajectory.h"
#include "seedling/wire.h"

namespace seedling::learner {

// One request of an inference batch. `conn` identifies the connection the
// environment lives on; slots are keyed by (conn, env_id).
struct InferenceItem {
  std::uint64_t conn = 0;
  const wire::StepRequest* request = nullptr;
};

// Receives every completed trajectory. Called from inference workers; may
// block (backpressure).
using TrajectorySink = std::function<void(Trajectory&&)>;

struct EngineCounters {
  std::uint64_t requests = 0;            // requests answered with an action
  std::uint64_t forwards = 0;            // batched forward calls
  std::uint64_t trajectories = 0;        // emitted
  std::uint64_t records_emitted = 0;     // records in emitted trajectories
  std::uint64_t records_overlap = 0;     // records carried into the next one
  std::uint64_t records_discarded = 0;   // open records of dropped actors
  std::uint64_t episodes = 0;
  std::uint64_t rejected = 0;            // unknown connection or env id
};

// Centralized inference over per-environment slots: recurrent state store,
// action sampling, and trajectory accumulation with the behaviour outputs
// recorded at inference time.
class InferenceEngine {
 public:
  // A null sink disables trajectory accumulation (benchmark mode).
  InferenceEngine(const RunConfig& config, const nn::Network& network,
                  const nn::SnapshotCell& params, TrajectorySink sink);

  // Creates num_envs fresh slots for a connection, replacing any existing.
  void register_actor(std::uint64_t conn, std::uint32_t actor_id,
                      std::uint32_t num_envs);
  // Drops the connection's slots and their open (partial) trajectories.
  void drop_actor(std::uint64_t conn);
  bool registered(std::uint64_t conn) const;

  // Evaluates the whole batch with one snapshot. The result has one entry
  // per item; nullopt marks an item with an unknown connection or env id.
  // Throws NotReadyError when no snapshot has been published.
  std::vector<std::optional<std::uint32_t>> serve(
      std::span<const InferenceItem> items);

  EngineCounters counters() const;
  // Records currently held in open accumulators.
  std::size_t open_records() const;
  // Records emitted trajectories keep from the previous one: 1 for unrolls,
  // overlap + 1 for replay sequences.
  std::size_t carried_records() const { return carry_; }
  std::size_t trajectory_records() const { return records_per_traj_; }

  // Mean return of the most recent `n` finished episodes (0 when none), and
  // how many finished episodes are available.
  double mean_recent_return(std::size_t n = 100) const;
  std::size_t finished_episodes() const;
  std::vector<double> recent_returns() const;

  double epsilon_of(std::uint32_t actor_id, std::uint32_t num_envs,
                    std::uint32_t env_id) const;

 private:
  struct Slot {
    std::mutex mu;
    bool dropped = false;
    std::uint32_t actor_id = 0;
    std::uint32_t env_id = 0;
    double epsilon = 0.0;
    std::mt19937_64 rng;
    nn::RecurrentState state;  // batch 1; empty for feed-forward nets
    std::int32_t last_action = -1;
    bool seen = false;
    double episode_return = 0.0;
    Trajectory acc;
    std::vector<nn::RecurrentState> entry_states;  // per open record
  };

  std::shared_ptr<Slot> find(std::uint64_t conn, std::uint32_t env) const;
  void append_record(Slot& s, const wire::StepRequest& req, std::uint8_t done,
                     const nn::RecurrentState& entry, std::int32_t prev_action,
                     std::int32_t action, std::span<const float> behavior,
                     std::uint64_t version);
  std::int32_t choose(Slot& s, std::span<const float> head);
  void finish_episode(double ret);

  const RunConfig config_;
  const nn::Network& net_;
  const nn::SnapshotCell& params_;
  TrajectorySink sink_;
  std::size_t records_per_traj_ = 0;
  std::size_t carry_ = 0;
  std::size_t obs_dim_ = 0, num_actions_ = 0, units_ = 0;

  mutable std::mutex mu_;  // guards slots_, counters_ and returns_
  std::map<std::pair<std::uint64_t, std::uint32_t>, std::shared_ptr<Slot>> slots_;
  EngineCounters counters_;
  std::deque<double> returns_;
};

}  // namespace seedling::learner
