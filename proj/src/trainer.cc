#include "seedling/trainer.h"

#include <cmath>

#include "seedling/error.h"
#include "seedling/qlearn.h"
#include "seedling/vtrace.h"

namespace seedling::learner {
namespace {

// Batched inputs of record t across a batch of trajectories.
struct RecordBatch {
  std::vector<float> obs;
  std::vector<std::int32_t> prev_action;
  std::vector<float> prev_reward;
  std::vector<std::uint8_t> reset;

  template <typename Get>
  void fill(std::size_t B, std::size_t obs_dim, std::size_t t, Get&& get) {
    obs.resize(B * obs_dim);
    prev_action.resize(B);
    prev_reward.resize(B);
    reset.resize(B);
    for (std::size_t b = 0; b < B; ++b) {
      const Trajectory& tr = get(b);
      std::copy(tr.obs_at(t), tr.obs_at(t) + obs_dim, obs.begin() + b * obs_dim);
      prev_action[b] = tr.prev_action[t];
      prev_reward[b] = tr.reward_in[t];
      reset[b] = tr.done_in[t];
    }
  }

  nn::StepInput input(std::size_t B) const {
    nn::StepInput in;
    in.batch = B;
    in.obs = obs;
    in.prev_action = prev_action;
    in.prev_reward = prev_reward;
    in.reset = reset;
    return in;
  }
};

template <typename Get>
nn::RecurrentState initial_states(const nn::Network& net, std::size_t B,
                                  Get&& get) {
  if (!net.spec().recurrent()) return {};
  nn::RecurrentState s = nn::RecurrentState::zeros(B, net.spec().lstm_units);
  for (std::size_t b = 0; b < B; ++b) {
    const Trajectory& tr = get(b);
    if (tr.initial_state.batch() != 1) {
      throw ConfigError("trajectory has no stored recurrent state");
    }
    s.assign_row(b, tr.initial_state, 0);
  }
  return s;
}

}  // namespace

Trainer::Trainer(const RunConfig& config, const nn::Network& network,
                 nn::ParamSnapshot initial)
    : config_(config),
      net_(network),
      adam_(nn::AdamConfig{config.effective_learning_rate(), config.adam_beta1,
                           config.adam_beta2, config.effective_adam_epsilon()}) {
  net_.check_params(initial);
  params_ = std::make_shared<const nn::ParamSnapshot>(std::move(initial));
  target_ = params_;
}

TrainMetrics Trainer::apply(nn::Gradients& grads, TrainMetrics m) {
  if (!std::isfinite(m.loss) || !nn::all_finite(grads)) {
    ++skipped_;
    m.applied = false;
    m.version = params_->version;
    return m;
  }
  m.grad_norm = nn::clip_global_norm(grads, config_.effective_gradient_clip());
  try {
    params_ = std::make_shared<const nn::ParamSnapshot>(adam_.step(*params_, grads));
  } catch (const NumericError&) {
    ++skipped_;
    m.applied = false;
    m.version = params_->version;
    return m;
  }
  ++updates_;
  m.applied = true;
  m.version = params_->version;
  if (config_.algo == Algo::kR2D2 &&
      updates_ % config_.q.target_update_interval == 0) {
    target_ = params_;
    ++target_syncs_;
  }
  return m;
}

TrainMetrics Trainer::train_vtrace(std::span<const Trajectory> batch) {
  if (batch.empty()) throw ConfigError("empty training batch");
  const std::size_t B = batch.size();
  const std::size_t R = batch[0].records();
  if (R < 2) throw ConfigError("trajectory needs at least one step");
  const auto& spec = net_.spec();
  for (const auto& tr : batch) {
    if (tr.records() != R || tr.obs_dim != spec.input_dim ||
        tr.num_actions != spec.num_actions) {
      throw ConfigError("training batch has mismatched trajectories");
    }
  }
  const std::size_t T = R - 1;
  const std::size_t A = spec.num_actions;
  const nn::ParamSnapshot& params = *params_;
  auto get = [&](std::size_t b) -> const Trajectory& { return batch[b]; };

  TrainMetrics m;
  std::vector<nn::StepTape> tapes(T);
  std::vector<Tensor> logits(R), values(R);
  try {
    nn::RecurrentState state = initial_states(net_, B, get);
    RecordBatch rb;
    for (std::size_t t = 0; t < R; ++t) {
      rb.fill(B, spec.input_dim, t, get);
      nn::StepOutput out =
          net_.forward(params, rb.input(B), state, t < T ? &tapes[t] : nullptr);
      logits[t] = std::move(out.head);
      values[t] = std::move(out.value);
      state = std::move(out.next);
    }
  } catch (const NumericError&) {
    ++skipped_;
    m.version = params_->version;
    return m;
  }

  std::vector<nn::OutputGrad> og(T);
  for (std::size_t t = 0; t < T; ++t) {
    og[t].head = Tensor({B, A});
    og[t].value = Tensor({B});
  }
  const double scale = 1.0 / static_cast<double>(B);
  std::vector<double> logp(A);
  std::vector<float> lg(T * A), vals(T);
  std::vector<std::int32_t> acts(T);
  for (std::size_t b = 0; b < B; ++b) {
    const Trajectory& tr = batch[b];
    vtrace::VTraceInputs in;
    in.behavior_log_prob.resize(T);
    in.target_log_prob.resize(T);
    in.reward.resize(T);
    in.done.resize(T);
    in.value.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      const auto a = static_cast<std::size_t>(tr.action[t]);
      vtrace::log_softmax({tr.behavior_at(t), A}, logp);
      in.behavior_log_prob[t] = logp[a];
      const auto row = logits[t].row(b);
      vtrace::log_softmax(row, logp);
      in.target_log_prob[t] = logp[a];
      in.reward[t] = tr.step_reward(t);
      in.done[t] = tr.step_done(t) ? 1 : 0;
      in.value[t] = values[t].data[b];
      std::copy(row.begin(), row.end(), lg.begin() + t * A);
      vals[t] = values[t].data[b];
      acts[t] = tr.action[t];
    }
    in.bootstrap_value = values[T].data[b];
    vtrace::VTraceTargets targets;
    try {
      targets = vtrace::vtrace_targets(in, config_.vtrace);
    } catch (const NumericError&) {
      ++skipped_;
      m.version = params_->version;
      return m;
    }
    const auto loss = vtrace::vtrace_loss(lg, A, vals, acts, targets.vs,
                                          targets.pg_advantages, config_.vtrace);
    m.loss += loss.terms.total * scale;
    m.policy_loss += loss.terms.policy * scale;
    m.baseline_loss += loss.terms.baseline * scale;
    m.entropy_loss += loss.terms.entropy * scale;
    for (std::size_t t = 0; t < T; ++t) {
      float* dh = og[t].head.ptr() + b * A;
      for (std::size_t a = 0; a < A; ++a) {
        dh[a] = static_cast<float>(loss.d_logits[t * A + a] * scale);
      }
      og[t].value.data[b] = static_cast<float>(loss.d_values[t] * scale);
    }
  }
  m.transitions = B * T;

  nn::Gradients grads = net_.zero_gradients();
  nn::RecurrentGrad carry;
  for (std::size_t t = T; t-- > 0;) {
    carry = net_.backward(params, tapes[t], og[t], carry, grads);
  }
  return apply(grads, std::move(m));
}

TrainMetrics Trainer::train_q(const replay::SampledBatch& batch) {
  const std::size_t B = batch.sequences.size();
  if (B == 0) throw ConfigError("empty training batch");
  if (batch.weights.size() != B) {
    throw ConfigError("importance weights do not match the batch");
  }
  const auto& spec = net_.spec();
  const std::size_t R = batch.sequences[0]->records();
  const std::size_t L = R - 1;
  const std::size_t burn = config_.q.burn_in;
  if (L <= burn) throw ConfigError("sequence shorter than burn_in + 1");
  for (const auto& s : batch.sequences) {
    if (s->records() != R || s->obs_dim != spec.input_dim ||
        s->num_actions != spec.num_actions) {
      throw ConfigError("training batch has mismatched sequences");
    }
  }
  const std::size_t Lp = L - burn;
  const std::size_t A = spec.num_actions;
  const nn::ParamSnapshot& online = *params_;
  const nn::ParamSnapshot& target = *target_;
  auto get = [&](std::size_t b) -> const Trajectory& {
    return *batch.sequences[b];
  };

  TrainMetrics m;
  std::vector<nn::StepTape> tapes(Lp);
  std::vector<Tensor> q_online(Lp + 1), q_target(Lp + 1);
  try {
    nn::RecurrentState s_online = initial_states(net_, B, get);
    nn::RecurrentState s_target = s_online;
    RecordBatch rb;
    for (std::size_t t = 0; t < R; ++t) {
      rb.fill(B, spec.input_dim, t, get);
      const auto in = rb.input(B);
      const bool trained = t >= burn && t < L;
      nn::StepOutput o =
          net_.forward(online, in, s_online, trained ? &tapes[t - burn] : nullptr);
      nn::StepOutput g = net_.forward(target, in, s_target);
      if (t >= burn) {
        q_online[t - burn] = std::move(o.head);
        q_target[t - burn] = std::move(g.head);
      }
      s_online = std::move(o.next);
      s_target = std::move(g.next);
    }
  } catch (const NumericError&) {
    ++skipped_;
    m.version = params_->version;
    return m;
  }

  std::vector<nn::OutputGrad> og(Lp);
  for (auto& g : og) g.head = Tensor({B, A});
  const double norm = 1.0 / static_cast<double>(B * Lp);
  Tensor on({Lp + 1, A}), tg({Lp + 1, A});
  std::vector<float> rewards(Lp);
  std::vector<std::uint8_t> dones(Lp);
  std::vector<double> abs_td(Lp);
  double td_sum = 0.0;
  m.priorities.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    const Trajectory& tr = *batch.sequences[b];
    for (std::size_t k = 0; k <= Lp; ++k) {
      std::copy_n(q_online[k].ptr() + b * A, A, on.ptr() + k * A);
      std::copy_n(q_target[k].ptr() + b * A, A, tg.ptr() + k * A);
    }
    for (std::size_t k = 0; k < Lp; ++k) {
      rewards[k] = tr.step_reward(burn + k);
      dones[k] = tr.step_done(burn + k) ? 1 : 0;
    }
    qlearn::TargetInputs in{rewards, dones, &on, &tg};
    const auto targets = qlearn::nstep_double_q_targets(in, 0, config_.q);
    const double w = batch.weights[b];
    for (std::size_t k = 0; k < Lp; ++k) {
      const auto a = static_cast<std::size_t>(tr.action[burn + k]);
      const double delta = static_cast<double>(on.data[k * A + a]) - targets[k];
      abs_td[k] = std::abs(delta);
      td_sum += abs_td[k];
      m.loss += 0.5 * w * delta * delta * norm;
      og[k].head.data[b * A + a] = static_cast<float>(w * delta * norm);
    }
    m.priorities[b] = qlearn::sequence_priority(abs_td, config_.q.priority_eta);
  }
  m.mean_abs_td = td_sum * norm;
  m.transitions = B * Lp;

  nn::Gradients grads = net_.zero_gradients();
  nn::RecurrentGrad carry;
  for (std::size_t k = Lp; k-- > 0;) {
    carry = net_.backward(online, tapes[k], og[k], carry, grads);
  }
  return apply(grads, std::move(m));
}

}  // namespace seedling::learner
