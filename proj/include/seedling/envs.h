#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace seedling::envs {

enum class EnvKind { kCatch, kChain, kGrid };

EnvKind parse_env_kind(const std::string& name);
std::string env_kind_name(EnvKind kind);

struct EnvSpec {
  EnvKind kind = EnvKind::kCatch;
  std::size_t width = 5;    // catch columns / grid side
  std::size_t height = 10;  // catch rows
  std::size_t chain_length = 5;
  std::size_t episode_cap = 0;  // 0 = kind default
  std::uint64_t seed = 0;

  static EnvSpec defaults(EnvKind kind);
  std::size_t obs_dim() const;
  std::size_t num_actions() const;
  std::size_t cap() const;
  void validate() const;
};

struct StepResult {
  std::vector<float> obs;
  float reward = 0.0f;
  bool done = false;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::vector<float> reset() = 0;
  // Throws ConfigError on an action outside [0, num_actions).
  virtual StepResult step(int action) = 0;
  virtual const EnvSpec& spec() const = 0;
  virtual std::size_t episode_steps() const = 0;
};

std::unique_ptr<Environment> make_env(const EnvSpec& spec);

// Catch: a ball falls one row per step from a random column of a W x H grid;
// the paddle on the bottom row moves left/stay/right. +1 for a catch, -1 for
// a miss. Observation: ball plane then paddle plane, each H x W.
class Catch final : public Environment {
 public:
  explicit Catch(EnvSpec spec);
  std::vector<float> reset() override;
  StepResult step(int action) override;
  const EnvSpec& spec() const override { return spec_; }
  std::size_t episode_steps() const override { return steps_; }

  std::size_t ball_column() const { return ball_col_; }
  std::size_t ball_row() const { return ball_row_; }
  std::size_t paddle_column() const { return paddle_col_; }
  // Starts an episode with the ball in a chosen column (for enumeration).
  std::vector<float> reset_to(std::size_t ball_column);

 private:
  std::vector<float> observe() const;
  EnvSpec spec_;
  std::mt19937_64 rng_;
  std::size_t ball_col_ = 0, ball_row_ = 0, paddle_col_ = 0, steps_ = 0;
};

// Chain: states 0..N-1, start at 0, actions {left, right}; reaching N-1
// pays 1 and ends the episode; capped at 2N steps. One-hot observation.
class Chain final : public Environment {
 public:
  explicit Chain(EnvSpec spec);
  std::vector<float> reset() override;
  StepResult step(int action) override;
  const EnvSpec& spec() const override { return spec_; }
  std::size_t episode_steps() const override { return steps_; }
  std::size_t state() const { return state_; }

 private:
  std::vector<float> observe() const;
  EnvSpec spec_;
  std::size_t state_ = 0, steps_ = 0;
};

// Grid: side x side, start in the top-left corner, goal in the bottom-right
// corner (reward 1, episode ends), moves up/down/left/right, walls block,
// capped at 50 steps. One-hot observation.
class Grid final : public Environment {
 public:
  explicit Grid(EnvSpec spec);
  std::vector<float> reset() override;
  StepResult step(int action) override;
  const EnvSpec& spec() const override { return spec_; }
  std::size_t episode_steps() const override { return steps_; }
  std::size_t cell() const { return cell_; }

 private:
  std::vector<float> observe() const;
  EnvSpec spec_;
  std::size_t cell_ = 0, steps_ = 0;
};

// Deterministic tabular model of the chain and grid environments.
struct TabularModel {
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<std::size_t> next;     // [s * A + a]
  std::vector<double> reward;        // [s * A + a]
  std::vector<std::uint8_t> terminal_transition;  // [s * A + a]
  std::vector<std::uint8_t> terminal_state;       // [s]
};

TabularModel tabular_model(const EnvSpec& spec);

// Q* by value iteration until the sup-norm change is <= tolerance. Throws
// ConfigError for environments without a tabular model (catch). Episode caps
// are ignored; terminal states have zero value.
std::vector<double> oracle_q(const EnvSpec& spec, double discount,
                             double tolerance = 1e-10);

}  // namespace seedling::envs
