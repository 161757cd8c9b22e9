#include "seedling/vtrace.h"

#include <algorithm>
#include <cmath>

#include "seedling/error.h"

namespace seedling::vtrace {

void VTraceConfig::validate() const {
  if (!(discount > 0.0 && discount <= 1.0)) {
    throw ConfigError("v-trace discount must be in (0, 1]");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("v-trace lambda must be in [0, 1]");
  }
  if (!(c_bar > 0.0 && rho_bar >= c_bar)) {
    throw ConfigError("v-trace clips must satisfy rho_bar >= c_bar > 0");
  }
  if (entropy_coefficient < 0.0 || value_coefficient < 0.0) {
    throw ConfigError("loss coefficients must be non-negative");
  }
}

VTraceTargets vtrace_targets(const VTraceInputs& in, const VTraceConfig& cfg) {
  const std::size_t T = in.length();
  if (T == 0) throw ConfigError("v-trace needs at least one step");
  if (in.behavior_log_prob.size() != T || in.target_log_prob.size() != T ||
      in.done.size() != T || in.value.size() != T) {
    throw ConfigError("v-trace inputs have mismatched lengths");
  }
  VTraceTargets out;
  out.vs.resize(T);
  out.pg_advantages.resize(T);
  out.rhos.resize(T);
  std::vector<double> cs(T), discounts(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double log_ratio = in.target_log_prob[t] - in.behavior_log_prob[t];
    if (!std::isfinite(log_ratio)) {
      throw NumericError("non-finite log importance ratio at step " +
                         std::to_string(t));
    }
    const double ratio = std::exp(log_ratio);
    out.rhos[t] = std::min(cfg.rho_bar, ratio);
    cs[t] = cfg.lambda * std::min(cfg.c_bar, ratio);
    discounts[t] = in.done[t] ? 0.0 : cfg.discount;
  }
  // acc holds v_{t+1} - V(x_{t+1}).
  double acc = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    const double next_value = t + 1 < T ? in.value[t + 1] : in.bootstrap_value;
    const double delta =
        out.rhos[t] * (in.reward[t] + discounts[t] * next_value - in.value[t]);
    acc = delta + discounts[t] * cs[t] * acc;
    out.vs[t] = in.value[t] + acc;
  }
  for (std::size_t t = 0; t < T; ++t) {
    const double next_vs = t + 1 < T ? out.vs[t + 1] : in.bootstrap_value;
    out.pg_advantages[t] =
        out.rhos[t] * (in.reward[t] + discounts[t] * next_vs - in.value[t]);
  }
  return out;
}

void log_softmax(std::span<const float> logits, std::span<double> out) {
  double mx = logits[0];
  for (float v : logits) mx = std::max(mx, static_cast<double>(v));
  double z = 0.0;
  for (float v : logits) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  for (std::size_t a = 0; a < logits.size(); ++a) out[a] = logits[a] - lz;
}

LossResult vtrace_loss(std::span<const float> logits, std::size_t num_actions,
                       std::span<const float> values,
                       std::span<const std::int32_t> actions,
                       std::span<const double> vs,
                       std::span<const double> pg_advantages,
                       const VTraceConfig& cfg,
                       std::span<const std::uint8_t> mask) {
  const std::size_t N = values.size();
  const std::size_t A = num_actions;
  if (logits.size() != N * A || actions.size() != N || vs.size() != N ||
      pg_advantages.size() != N || (!mask.empty() && mask.size() != N)) {
    throw ConfigError("v-trace loss inputs have mismatched shapes");
  }
  LossResult res;
  res.d_logits.assign(N * A, 0.0f);
  res.d_values.assign(N, 0.0f);
  std::vector<double> logp(A);
  for (std::size_t i = 0; i < N; ++i) {
    if (!mask.empty() && mask[i] == 0) continue;
    const auto row = logits.subspan(i * A, A);
    log_softmax(row, logp);
    const std::int32_t a = actions[i];
    if (a < 0 || static_cast<std::size_t>(a) >= A) {
      throw ConfigError("action out of range in v-trace loss");
    }
    double entropy = 0.0;
    for (std::size_t j = 0; j < A; ++j) entropy -= std::exp(logp[j]) * logp[j];
    const double adv = pg_advantages[i];
    const double err = vs[i] - values[i];
    res.terms.policy += -logp[a] * adv;
    res.terms.baseline += 0.5 * cfg.value_coefficient * err * err;
    res.terms.entropy += -cfg.entropy_coefficient * entropy;
    // d/dlogit_j of -log pi(a) adv = adv (pi_j - [j == a]);
    // d/dlogit_j of -c H = c pi_j (log pi_j + H).
    for (std::size_t j = 0; j < A; ++j) {
      const double p = std::exp(logp[j]);
      double g = adv * (p - (static_cast<std::int32_t>(j) == a ? 1.0 : 0.0));
      g += cfg.entropy_coefficient * p * (logp[j] + entropy);
      res.d_logits[i * A + j] = static_cast<float>(g);
    }
    res.d_values[i] = static_cast<float>(-cfg.value_coefficient * err);
  }
  res.terms.total = res.terms.policy + res.terms.baseline + res.terms.entropy;
  return res;
}

}  // namespace seedling::vtrace
