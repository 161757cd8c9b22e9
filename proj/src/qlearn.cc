#include "seedling/qlearn.h"

#include <algorithm>
#include <cmath>

#include "seedling/error.h"

namespace seedling::qlearn {

void QConfig::validate() const {
  if (!(discount > 0.0 && discount <= 1.0)) {
    throw ConfigError("q-learning discount must be in (0, 1]");
  }
  if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
  if (burn_in >= sequence_length) {
    throw ConfigError("burn_in must be shorter than sequence_length");
  }
  if (sequence_overlap >= sequence_length) {
    throw ConfigError("sequence_overlap must be shorter than sequence_length");
  }
  for (double v : {priority_eta, priority_exponent, importance_exponent}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError("priority eta/alpha/beta must be in [0, 1]");
    }
  }
  if (target_update_interval < 1) {
    throw ConfigError("target_update_interval must be >= 1");
  }
  if (!(replay_ratio > 0.0)) throw ConfigError("replay_ratio must be positive");
}

double rescale(double x, double eps) {
  const double s = x < 0.0 ? -1.0 : (x > 0.0 ? 1.0 : 0.0);
  return s * (std::sqrt(std::abs(x) + 1.0) - 1.0) + eps * x;
}

double rescale_inverse(double y, double eps) {
  const double s = y < 0.0 ? -1.0 : (y > 0.0 ? 1.0 : 0.0);
  const double root =
      (std::sqrt(1.0 + 4.0 * eps * (std::abs(y) + 1.0 + eps)) - 1.0) /
      (2.0 * eps);
  return s * (root * root - 1.0);
}

double epsilon_for_actor(std::size_t i, std::size_t n) {
  if (n <= 1) return 0.4;
  if (i >= n) throw ConfigError("actor index out of range");
  const double exponent =
      1.0 + 7.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  return std::pow(0.4, exponent);
}

double sequence_priority(std::span<const double> abs_td, double eta) {
  if (abs_td.empty()) throw ConfigError("sequence priority of an empty list");
  double mx = 0.0, sum = 0.0;
  for (double d : abs_td) {
    mx = std::max(mx, d);
    sum += d;
  }
  return eta * mx + (1.0 - eta) * sum / static_cast<double>(abs_td.size());
}

std::vector<double> nstep_double_q_targets(const TargetInputs& in,
                                           std::size_t first,
                                           const QConfig& cfg) {
  const std::size_t L = in.rewards.size();
  if (in.dones.size() != L || in.online_q == nullptr ||
      in.target_q == nullptr || in.online_q->rank() != 2 ||
      in.online_q->dim(0) != L + 1 || in.target_q->shape != in.online_q->shape) {
    throw ConfigError("n-step target inputs have mismatched shapes");
  }
  if (first >= L) throw ConfigError("sequence shorter than burn_in + 1");
  const std::size_t A = in.online_q->dim(1);
  std::vector<double> targets;
  targets.reserve(L - first);
  for (std::size_t t = first; t < L; ++t) {
    const std::size_t m = std::min(cfg.n_steps, L - t);
    double ret = 0.0;
    double disc = 1.0;
    bool terminal = false;
    for (std::size_t k = 0; k < m; ++k) {
      ret += disc * in.rewards[t + k];
      if (in.dones[t + k]) {
        terminal = true;
        break;
      }
      disc *= cfg.discount;
    }
    if (!terminal) {
      const auto online = in.online_q->row(t + m);
      const auto best = static_cast<std::size_t>(
          std::max_element(online.begin(), online.end()) - online.begin());
      const double q = in.target_q->data[(t + m) * A + best];
      ret += disc * rescale_inverse(q, cfg.rescale_epsilon);
    }
    targets.push_back(rescale(ret, cfg.rescale_epsilon));
  }
  return targets;
}

nn::RecurrentState burn_in_unroll(const nn::Network& net,
                                  const nn::ParamSnapshot& params,
                                  const Trajectory& seq, std::size_t burn_in) {
  if (!net.spec().recurrent()) return {};
  if (seq.initial_state.batch() != 1) {
    throw ConfigError("sequence has no stored recurrent state");
  }
  if (burn_in >= seq.records()) {
    throw ConfigError("burn-in prefix longer than the sequence");
  }
  nn::RecurrentState state = seq.initial_state;
  for (std::size_t t = 0; t < burn_in; ++t) {
    nn::StepInput in;
    in.batch = 1;
    in.obs = {seq.obs_at(t), seq.obs_dim};
    in.prev_action = {&seq.prev_action[t], 1};
    in.prev_reward = {&seq.reward_in[t], 1};
    in.reset = {&seq.done_in[t], 1};
    state = net.forward(params, in, state).next;
  }
  return state;
}

}  // namespace seedling::qlearn
