#include "seedling/envs.h"

#include <algorithm>
#include <cmath>

#include "seedling/error.h"

namespace seedling::envs {

EnvKind parse_env_kind(const std::string& name) {
  if (name == "catch") return EnvKind::kCatch;
  if (name == "chain") return EnvKind::kChain;
  if (name == "grid") return EnvKind::kGrid;
  throw ConfigError("unknown environment: " + name);
}

std::string env_kind_name(EnvKind kind) {
  switch (kind) {
    case EnvKind::kCatch: return "catch";
    case EnvKind::kChain: return "chain";
    case EnvKind::kGrid: return "grid";
  }
  return "?";
}

EnvSpec EnvSpec::defaults(EnvKind kind) {
  EnvSpec s;
  s.kind = kind;
  if (kind == EnvKind::kGrid) s.width = 5;
  return s;
}

std::size_t EnvSpec::obs_dim() const {
  switch (kind) {
    case EnvKind::kCatch: return 2 * width * height;
    case EnvKind::kChain: return chain_length;
    case EnvKind::kGrid: return width * width;
  }
  return 0;
}

std::size_t EnvSpec::num_actions() const {
  switch (kind) {
    case EnvKind::kCatch: return 3;
    case EnvKind::kChain: return 2;
    case EnvKind::kGrid: return 4;
  }
  return 0;
}

std::size_t EnvSpec::cap() const {
  if (episode_cap != 0) return episode_cap;
  switch (kind) {
    case EnvKind::kCatch: return height - 1;
    case EnvKind::kChain: return 2 * chain_length;
    case EnvKind::kGrid: return 50;
  }
  return 0;
}

void EnvSpec::validate() const {
  switch (kind) {
    case EnvKind::kCatch:
      if (width < 1 || height < 2) throw ConfigError("catch needs W >= 1, H >= 2");
      break;
    case EnvKind::kChain:
      if (chain_length < 2) throw ConfigError("chain needs N >= 2");
      break;
    case EnvKind::kGrid:
      if (width < 2) throw ConfigError("grid side must be >= 2");
      break;
  }
}

std::unique_ptr<Environment> make_env(const EnvSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case EnvKind::kCatch: return std::make_unique<Catch>(spec);
    case EnvKind::kChain: return std::make_unique<Chain>(spec);
    case EnvKind::kGrid: return std::make_unique<Grid>(spec);
  }
  throw ConfigError("unknown environment kind");
}

namespace {
void check_action(int action, std::size_t n) {
  if (action < 0 || static_cast<std::size_t>(action) >= n) {
    throw ConfigError("invalid action " + std::to_string(action));
  }
}
}  // namespace

Catch::Catch(EnvSpec spec) : spec_(spec), rng_(spec.seed) {
  spec_.validate();
  reset();
}

std::vector<float> Catch::reset() {
  std::uniform_int_distribution<std::size_t> col(0, spec_.width - 1);
  return reset_to(col(rng_));
}

std::vector<float> Catch::reset_to(std::size_t ball_column) {
  ball_col_ = std::min(ball_column, spec_.width - 1);
  ball_row_ = 0;
  paddle_col_ = spec_.width / 2;
  steps_ = 0;
  return observe();
}

StepResult Catch::step(int action) {
  check_action(action, 3);
  if (action == 0 && paddle_col_ > 0) --paddle_col_;
  if (action == 2 && paddle_col_ + 1 < spec_.width) ++paddle_col_;
  ++ball_row_;
  ++steps_;
  StepResult r;
  if (ball_row_ == spec_.height - 1) {
    r.done = true;
    r.reward = ball_col_ == paddle_col_ ? 1.0f : -1.0f;
  } else if (steps_ >= spec_.cap()) {
    r.done = true;
  }
  r.obs = observe();
  return r;
}

std::vector<float> Catch::observe() const {
  const std::size_t plane = spec_.width * spec_.height;
  std::vector<float> obs(2 * plane, 0.0f);
  obs[ball_row_ * spec_.width + ball_col_] = 1.0f;
  obs[plane + (spec_.height - 1) * spec_.width + paddle_col_] = 1.0f;
  return obs;
}

Chain::Chain(EnvSpec spec) : spec_(spec) {
  spec_.validate();
  reset();
}

std::vector<float> Chain::reset() {
  state_ = 0;
  steps_ = 0;
  return observe();
}

StepResult Chain::step(int action) {
  check_action(action, 2);
  if (action == 1) {
    ++state_;
  } else if (state_ > 0) {
    --state_;
  }
  ++steps_;
  StepResult r;
  if (state_ == spec_.chain_length - 1) {
    r.reward = 1.0f;
    r.done = true;
  } else if (steps_ >= spec_.cap()) {
    r.done = true;
  }
  r.obs = observe();
  return r;
}

std::vector<float> Chain::observe() const {
  std::vector<float> obs(spec_.chain_length, 0.0f);
  obs[state_] = 1.0f;
  return obs;
}

namespace {
// up, down, left, right
std::size_t grid_move(std::size_t cell, int action, std::size_t side) {
  std::size_t r = cell / side, c = cell % side;
  switch (action) {
    case 0: if (r > 0) --r; break;
    case 1: if (r + 1 < side) ++r; break;
    case 2: if (c > 0) --c; break;
    case 3: if (c + 1 < side) ++c; break;
  }
  return r * side + c;
}
}  // namespace

Grid::Grid(EnvSpec spec) : spec_(spec) {
  spec_.validate();
  reset();
}

std::vector<float> Grid::reset() {
  cell_ = 0;
  steps_ = 0;
  return observe();
}

StepResult Grid::step(int action) {
  check_action(action, 4);
  const std::size_t side = spec_.width;
  cell_ = grid_move(cell_, action, side);
  ++steps_;
  StepResult r;
  if (cell_ == side * side - 1) {
    r.reward = 1.0f;
    r.done = true;
  } else if (steps_ >= spec_.cap()) {
    r.done = true;
  }
  r.obs = observe();
  return r;
}

std::vector<float> Grid::observe() const {
  std::vector<float> obs(spec_.width * spec_.width, 0.0f);
  obs[cell_] = 1.0f;
  return obs;
}

TabularModel tabular_model(const EnvSpec& spec) {
  spec.validate();
  TabularModel m;
  if (spec.kind == EnvKind::kChain) {
    const std::size_t N = spec.chain_length;
    m.num_states = N;
    m.num_actions = 2;
    m.terminal_state.assign(N, 0);
    m.terminal_state[N - 1] = 1;
    for (std::size_t s = 0; s < N; ++s) {
      for (int a = 0; a < 2; ++a) {
        std::size_t n = s;
        if (s != N - 1) n = a == 1 ? s + 1 : (s > 0 ? s - 1 : 0);
        const bool goal = s != N - 1 && n == N - 1;
        m.next.push_back(n);
        m.reward.push_back(goal ? 1.0 : 0.0);
        m.terminal_transition.push_back(goal ? 1 : 0);
      }
    }
    return m;
  }
  if (spec.kind == EnvKind::kGrid) {
    const std::size_t side = spec.width;
    const std::size_t goal = side * side - 1;
    m.num_states = side * side;
    m.num_actions = 4;
    m.terminal_state.assign(m.num_states, 0);
    m.terminal_state[goal] = 1;
    for (std::size_t s = 0; s < m.num_states; ++s) {
      for (int a = 0; a < 4; ++a) {
        const std::size_t n = s == goal ? s : grid_move(s, a, side);
        const bool hit = s != goal && n == goal;
        m.next.push_back(n);
        m.reward.push_back(hit ? 1.0 : 0.0);
        m.terminal_transition.push_back(hit ? 1 : 0);
      }
    }
    return m;
  }
  throw ConfigError("environment " + env_kind_name(spec.kind) +
                    " has no tabular model");
}

std::vector<double> oracle_q(const EnvSpec& spec, double discount,
                             double tolerance) {
  const TabularModel m = tabular_model(spec);
  const std::size_t S = m.num_states, A = m.num_actions;
  std::vector<double> q(S * A, 0.0), next_q(S * A, 0.0);
  for (int iter = 0; iter < 1'000'000; ++iter) {
    double change = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        const std::size_t i = s * A + a;
        double v = 0.0;
        if (!m.terminal_state[s]) {
          v = m.reward[i];
          if (!m.terminal_transition[i]) {
            const std::size_t n = m.next[i];
            double best = q[n * A];
            for (std::size_t b = 1; b < A; ++b) best = std::max(best, q[n * A + b]);
            v += discount * best;
          }
        }
        next_q[i] = v;
        change = std::max(change, std::abs(v - q[i]));
      }
    }
    q.swap(next_q);
    if (change <= tolerance) return q;
  }
  throw NumericError("value iteration did not converge");
}

}  // namespace seedling::envs
