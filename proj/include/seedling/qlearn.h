#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seedling/nn.h"
#include "seedling/trajectory.h"

namespace seedling::qlearn {

struct QConfig {
  double discount = 0.997;
  std::size_t n_steps = 5;
  std::size_t burn_in = 40;
  std::size_t sequence_length = 120;  // includes the burn-in prefix
  std::size_t sequence_overlap = 40;
  std::uint64_t target_update_interval = 2500;
  double priority_eta = 0.9;
  double priority_exponent = 0.9;
  double importance_exponent = 0.6;
  double rescale_epsilon = 1e-3;
  double replay_ratio = 0.75;
  double eval_epsilon = 1e-3;

  void validate() const;
  std::size_t trained_steps() const { return sequence_length - burn_in; }
};

// h(x) = sign(x) (sqrt(|x| + 1) - 1) + eps x
double rescale(double x, double eps = 1e-3);
// Closed-form inverse of rescale().
double rescale_inverse(double y, double eps = 1e-3);

// Exploration rate of stream i out of n: 0.4^(1 + 7 i / (n - 1)); n == 1
// gives 0.4.
double epsilon_for_actor(std::size_t i, std::size_t n);

// eta * max + (1 - eta) * mean of absolute TD errors.
double sequence_priority(std::span<const double> abs_td, double eta);

// Transition data of one sequence with L steps: rewards[t] and dones[t]
// follow action t; q tables hold L + 1 rows (row L is the bootstrap state).
struct TargetInputs {
  std::span<const float> rewards;
  std::span<const std::uint8_t> dones;
  const Tensor* online_q = nullptr;  // [L + 1, A]
  const Tensor* target_q = nullptr;  // [L + 1, A]
};

// Rescaled n-step double-Q targets for steps [first, L). The return is
// truncated at episode ends (no bootstrap past a terminal step) and at the
// sequence end (bootstrapping from row L with the matching discount).
std::vector<double> nstep_double_q_targets(const TargetInputs& in,
                                           std::size_t first,
                                           const QConfig& cfg);

// Runs the network over the burn-in prefix of `seq` without recording
// activations and returns the state entering step `burn_in`.
nn::RecurrentState burn_in_unroll(const nn::Network& net,
                                  const nn::ParamSnapshot& params,
                                  const Trajectory& seq, std::size_t burn_in);

}  // namespace seedling::qlearn
