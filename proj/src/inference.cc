#include "seedling/inference.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seedling/error.h"
#include "seedling/qlearn.h"

namespace seedling::learner {
namespace {

constexpr std::size_t kReturnWindow = 1000;

std::size_t argmax(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) -
                                  v.begin());
}

}  // namespace

InferenceEngine::InferenceEngine(const RunConfig& config,
                                 const nn::Network& network,
                                 const nn::SnapshotCell& params,
                                 TrajectorySink sink)
    : config_(config), net_(network), params_(params), sink_(std::move(sink)) {
  obs_dim_ = net_.spec().input_dim;
  num_actions_ = net_.spec().num_actions;
  units_ = net_.spec().lstm_units;
  if (config_.algo == Algo::kVTrace) {
    records_per_traj_ = config_.unroll_length + 1;
    carry_ = 1;
  } else {
    records_per_traj_ = config_.q.sequence_length + 1;
    carry_ = config_.q.sequence_overlap + 1;
  }
}

double InferenceEngine::epsilon_of(std::uint32_t actor_id,
                                   std::uint32_t num_envs,
                                   std::uint32_t env_id) const {
  if (config_.eval_epsilon) return *config_.eval_epsilon;
  if (config_.algo == Algo::kVTrace) return 0.0;
  const std::size_t streams = config_.exploration_streams;
  const std::size_t idx =
      (static_cast<std::size_t>(actor_id) * num_envs + env_id) % streams;
  return qlearn::epsilon_for_actor(idx, streams);
}

void InferenceEngine::register_actor(std::uint64_t conn, std::uint32_t actor_id,
                                     std::uint32_t num_envs) {
  if (num_envs == 0) throw ProtocolError("hello with zero environments");
  drop_actor(conn);
  std::lock_guard lock(mu_);
  for (std::uint32_t e = 0; e < num_envs; ++e) {
    auto s = std::make_shared<Slot>();
    s->actor_id = actor_id;
    s->env_id = e;
    s->epsilon = epsilon_of(actor_id, num_envs, e);
    std::seed_seq seq{static_cast<std::uint64_t>(config_.seed),
                      static_cast<std::uint64_t>(actor_id),
                      static_cast<std::uint64_t>(e)};
    s->rng.seed(seq);
    if (units_ > 0) s->state = nn::RecurrentState::zeros(1, units_);
    slots_[{conn, e}] = std::move(s);
  }
}

void InferenceEngine::drop_actor(std::uint64_t conn) {
  std::vector<std::shared_ptr<Slot>> victims;
  {
    std::lock_guard lock(mu_);
    auto it = slots_.lower_bound({conn, 0});
    while (it != slots_.end() && it->first.first == conn) {
      victims.push_back(std::move(it->second));
      it = slots_.erase(it);
    }
  }
  std::uint64_t discarded = 0;
  for (auto& s : victims) {
    std::lock_guard slot_lock(s->mu);
    s->dropped = true;
    discarded += s->acc.records();
  }
  std::lock_guard lock(mu_);
  counters_.records_discarded += discarded;
}

bool InferenceEngine::registered(std::uint64_t conn) const {
  std::lock_guard lock(mu_);
  auto it = slots_.lower_bound({conn, 0});
  return it != slots_.end() && it->first.first == conn;
}

std::shared_ptr<InferenceEngine::Slot> InferenceEngine::find(
    std::uint64_t conn, std::uint32_t env) const {
  std::lock_guard lock(mu_);
  auto it = slots_.find({conn, env});
  return it == slots_.end() ? nullptr : it->second;
}

std::int32_t InferenceEngine::choose(Slot& s, std::span<const float> head) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool greedy_mode = config_.eval_epsilon || config_.algo == Algo::kR2D2;
  if (greedy_mode) {
    if (unit(s.rng) < s.epsilon) {
      std::uniform_int_distribution<std::int32_t> pick(
          0, static_cast<std::int32_t>(num_actions_) - 1);
      return pick(s.rng);
    }
    return static_cast<std::int32_t>(argmax(head));
  }
  // Categorical sample from softmax(logits).
  const float mx = *std::max_element(head.begin(), head.end());
  double probs[64];
  std::vector<double> big;
  double* p = probs;
  if (head.size() > 64) {
    big.resize(head.size());
    p = big.data();
  }
  double z = 0.0;
  for (std::size_t a = 0; a < head.size(); ++a) {
    p[a] = std::exp(static_cast<double>(head[a]) - mx);
    z += p[a];
  }
  double u = unit(s.rng) * z;
  for (std::size_t a = 0; a < head.size(); ++a) {
    u -= p[a];
    if (u < 0.0) return static_cast<std::int32_t>(a);
  }
  return static_cast<std::int32_t>(head.size() - 1);
}

void InferenceEngine::append_record(Slot& s, const wire::StepRequest& req,
                                    std::uint8_t done,
                                    const nn::RecurrentState& entry,
                                    std::int32_t prev_action,
                                    std::int32_t action,
                                    std::span<const float> behavior,
                                    std::uint64_t version) {
  Trajectory& t = s.acc;
  if (t.records() == 0) {
    t.actor_id = s.actor_id;
    t.env_id = s.env_id;
    t.obs_dim = obs_dim_;
    t.num_actions = num_actions_;
    t.obs.reserve(records_per_traj_ * obs_dim_);
    t.behavior.reserve(records_per_traj_ * num_actions_);
  }
  t.obs.insert(t.obs.end(), req.obs.begin(), req.obs.end());
  t.reward_in.push_back(req.reward);
  t.done_in.push_back(done);
  t.prev_action.push_back(prev_action);
  t.action.push_back(action);
  t.behavior.insert(t.behavior.end(), behavior.begin(), behavior.end());
  t.epsilon.push_back(static_cast<float>(s.epsilon));
  t.version.push_back(version);
  s.entry_states.push_back(entry);
}

void InferenceEngine::finish_episode(double ret) {
  ++counters_.episodes;
  returns_.push_back(ret);
  if (returns_.size() > kReturnWindow) returns_.pop_front();
}

std::vector<std::optional<std::uint32_t>> InferenceEngine::serve(
    std::span<const InferenceItem> items) {
  const nn::SnapshotPtr snap = params_.load();
  if (!snap) throw NotReadyError("no parameter snapshot published yet");

  std::vector<std::optional<std::uint32_t>> result(items.size());
  std::vector<std::shared_ptr<Slot>> slots;
  std::vector<std::size_t> index;  // item index of each valid row
  std::vector<std::unique_lock<std::mutex>> locks;
  slots.reserve(items.size());
  index.reserve(items.size());
  locks.reserve(items.size());
  std::uint64_t rejected = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto* req = items[i].request;
    std::shared_ptr<Slot> s =
        req ? find(items[i].conn, req->env_id) : nullptr;
    if (!s || req->obs.size() != obs_dim_ ||
        std::find(slots.begin(), slots.end(), s) != slots.end()) {
      ++rejected;
      continue;
    }
    std::unique_lock lk(s->mu);
    if (s->dropped) {
      ++rejected;
      continue;
    }
    locks.push_back(std::move(lk));
    slots.push_back(std::move(s));
    index.push_back(i);
  }

  const std::size_t n = slots.size();
  std::vector<Trajectory> emitted;
  if (n > 0) {
    std::vector<float> obs(n * obs_dim_);
    std::vector<std::int32_t> prev_action(n);
    std::vector<float> prev_reward(n);
    std::vector<std::uint8_t> reset(n);
    nn::RecurrentState state;
    if (units_ > 0) state = nn::RecurrentState::zeros(n, units_);
    for (std::size_t r = 0; r < n; ++r) {
      const auto& req = *items[index[r]].request;
      Slot& s = *slots[r];
      std::copy(req.obs.begin(), req.obs.end(), obs.begin() + r * obs_dim_);
      prev_action[r] = s.last_action;
      prev_reward[r] = req.reward;
      reset[r] = (req.done != 0 || !s.seen) ? 1 : 0;
      if (units_ > 0) state.assign_row(r, s.state, 0);
    }
    nn::StepInput in;
    in.batch = n;
    in.obs = obs;
    in.prev_action = prev_action;
    in.prev_reward = prev_reward;
    in.reset = reset;
    const nn::StepOutput out = net_.forward(*snap, in, state);

    std::vector<double> finished;
    for (std::size_t r = 0; r < n; ++r) {
      const auto& req = *items[index[r]].request;
      Slot& s = *slots[r];
      const auto head = out.head.row(r);
      const std::int32_t action = choose(s, head);

      if (reset[r]) {
        if (s.seen) finished.push_back(s.episode_return + req.reward);
        s.episode_return = 0.0;
      } else {
        s.episode_return += req.reward;
      }

      if (sink_) {
        append_record(s, req, reset[r], s.state, s.last_action, action, head,
                      snap->version);
        if (s.acc.records() == records_per_traj_) {
          Trajectory done = s.acc;
          done.initial_state = s.entry_states.front();
          emitted.push_back(std::move(done));
          const std::size_t drop = records_per_traj_ - carry_;
          Trajectory& a = s.acc;
          a.obs.erase(a.obs.begin(), a.obs.begin() + drop * obs_dim_);
          a.reward_in.erase(a.reward_in.begin(), a.reward_in.begin() + drop);
          a.done_in.erase(a.done_in.begin(), a.done_in.begin() + drop);
          a.prev_action.erase(a.prev_action.begin(),
                              a.prev_action.begin() + drop);
          a.action.erase(a.action.begin(), a.action.begin() + drop);
          a.behavior.erase(a.behavior.begin(),
                           a.behavior.begin() + drop * num_actions_);
          a.epsilon.erase(a.epsilon.begin(), a.epsilon.begin() + drop);
          a.version.erase(a.version.begin(), a.version.begin() + drop);
          s.entry_states.erase(s.entry_states.begin(),
                               s.entry_states.begin() + drop);
        }
      }

      if (units_ > 0) s.state = out.next.slice(r);
      s.last_action = action;
      s.seen = true;
      result[index[r]] = static_cast<std::uint32_t>(action);
    }

    std::lock_guard lock(mu_);
    counters_.requests += n;
    ++counters_.forwards;
    for (double ret : finished) finish_episode(ret);
    counters_.trajectories += emitted.size();
    counters_.records_emitted += emitted.size() * records_per_traj_;
    counters_.records_overlap += emitted.size() * carry_;
  }
  {
    std::lock_guard lock(mu_);
    counters_.rejected += rejected;
  }
  locks.clear();
  for (auto& t : emitted) sink_(std::move(t));
  return result;
}

EngineCounters InferenceEngine::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

std::size_t InferenceEngine::open_records() const {
  std::vector<std::shared_ptr<Slot>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [k, s] : slots_) all.push_back(s);
  }
  std::size_t total = 0;
  for (const auto& s : all) {
    std::lock_guard lk(s->mu);
    total += s->acc.records();
  }
  return total;
}

double InferenceEngine::mean_recent_return(std::size_t n) const {
  std::lock_guard lock(mu_);
  if (returns_.empty() || n == 0) return 0.0;
  const std::size_t k = std::min(n, returns_.size());
  return std::accumulate(returns_.end() - static_cast<std::ptrdiff_t>(k),
                         returns_.end(), 0.0) /
         static_cast<double>(k);
}

std::size_t InferenceEngine::finished_episodes() const {
  std::lock_guard lock(mu_);
  return counters_.episodes;
}

std::vector<double> InferenceEngine::recent_returns() const {
  std::lock_guard lock(mu_);
  return {returns_.begin(), returns_.end()};
}

}  // namespace seedling::learner
