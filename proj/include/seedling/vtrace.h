#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace seedling::vtrace {

struct VTraceConfig {
  double discount = 0.99;
  double lambda = 1.0;
  double rho_bar = 1.0;  // importance-weight clip for the value targets
  double c_bar = 1.0;    // trace-cutting clip
  double entropy_coefficient = 5e-4;
  double value_coefficient = 0.5;

  void validate() const;
};

// One unroll of length T. `done[t]` means the episode ended after step t, so
// the discount from t to t+1 is zero.
struct VTraceInputs {
  std::vector<double> behavior_log_prob;  // log mu_t(a_t)
  std::vector<double> target_log_prob;    // log pi_t(a_t)
  std::vector<double> reward;
  std::vector<std::uint8_t> done;
  std::vector<double> value;              // V(x_t)
  double bootstrap_value = 0.0;           // V(x_T)

  std::size_t length() const { return reward.size(); }
};

struct VTraceTargets {
  std::vector<double> vs;
  std::vector<double> pg_advantages;
  std::vector<double> rhos;  // clipped importance weights
};

// Backward recursion over the unroll. The result is a constant with respect
// to the network: callers must not differentiate through it.
VTraceTargets vtrace_targets(const VTraceInputs& in, const VTraceConfig& cfg);

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;    // sum -log pi(a) * advantage
  double baseline = 0.0;  // 0.5 * vf_coef * sum (vs - V)^2
  double entropy = 0.0;   // -ent_coef * sum H(pi)
};

struct LossResult {
  LossTerms terms;
  std::vector<float> d_logits;  // [N * A]
  std::vector<float> d_values;  // [N]
};

// Policy-gradient, baseline and entropy loss summed over N steps, together
// with its gradient with respect to the logits and value outputs.
// `logits` is [N * num_actions]; steps with mask 0 are ignored (mask may be
// empty).
LossResult vtrace_loss(std::span<const float> logits, std::size_t num_actions,
                       std::span<const float> values,
                       std::span<const std::int32_t> actions,
                       std::span<const double> vs,
                       std::span<const double> pg_advantages,
                       const VTraceConfig& cfg,
                       std::span<const std::uint8_t> mask = {});

// Numerically stable log-softmax of one row.
void log_softmax(std::span<const float> logits, std::span<double> out);

}  // namespace seedling::vtrace
