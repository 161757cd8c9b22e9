#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "seedling/nn.h"

namespace seedling {

// A fixed-length run of inference records for one environment slot.
//
// Record t holds what the learner saw and produced at one inference call:
// the observation, the reward and episode-boundary flag that arrived with it
// (both belong to the previous action), the previous action, the action
// chosen, and the behaviour outputs and parameter version used to choose it.
// A unit of training with T steps therefore has T + 1 records: step t uses
// obs[t] and action[t], its reward is reward_in[t + 1], its termination flag
// is done_in[t + 1], and record T only supplies the bootstrap observation.
struct Trajectory {
  std::uint32_t actor_id = 0;
  std::uint32_t env_id = 0;
  std::size_t obs_dim = 0;
  std::size_t num_actions = 0;

  std::vector<float> obs;                // [records * obs_dim]
  std::vector<float> reward_in;          // [records]
  std::vector<std::uint8_t> done_in;     // [records]
  std::vector<std::int32_t> prev_action; // [records], -1 when none
  std::vector<std::int32_t> action;      // [records]
  std::vector<float> behavior;           // [records * num_actions] logits or Q
  std::vector<float> epsilon;            // [records], Q-learning only
  std::vector<std::uint64_t> version;    // [records]
  // State entering record 0, before any reset masking.
  nn::RecurrentState initial_state;

  std::size_t records() const { return action.size(); }
  std::size_t steps() const { return records() == 0 ? 0 : records() - 1; }

  float step_reward(std::size_t t) const { return reward_in[t + 1]; }
  bool step_done(std::size_t t) const { return done_in[t + 1] != 0; }
  const float* obs_at(std::size_t t) const { return obs.data() + t * obs_dim; }
  const float* behavior_at(std::size_t t) const {
    return behavior.data() + t * num_actions;
  }
};

}  // namespace seedling
