#include "seedling/learner.h"

#include <fstream>
#include <iostream>

#include "json.hpp"

#include "seedling/error.h"

namespace seedling::learner {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

replay::PrioritizedConfig replay_config(const RunConfig& c) {
  replay::PrioritizedConfig p;
  p.capacity = c.replay_capacity;
  p.min_size = c.replay_min_size;
  p.priority_exponent = c.q.priority_exponent;
  p.importance_exponent = c.q.importance_exponent;
  p.sequence_records = c.q.sequence_length + 1;
  p.seed = c.seed;
  return p;
}

json percentiles_json(const Percentiles& p) {
  return {{"p50", p.p50}, {"p95", p.p95}, {"p99", p.p99},
          {"mean", p.mean}, {"count", p.count}};
}

}  // namespace

std::string to_json(const LearnerSummary& s) {
  json j;
  j["frames"] = s.frames;
  j["fps"] = s.fps;
  j["elapsed_s"] = s.elapsed_s;
  j["updates"] = s.updates;
  j["skipped_updates"] = s.skipped_updates;
  j["batches_trained"] = s.batches_trained;
  j["trajectories"] = s.trajectories;
  j["episodes"] = s.episodes;
  j["mean_return_100"] = s.mean_return_100;
  j["version"] = s.version;
  j["target_syncs"] = s.target_syncs;
  j["latency_ms"] = percentiles_json(s.latency_ms);
  j["stages_ms"] = {{"batch_wait", s.batch_wait_ms},
                    {"forward", s.forward_ms},
                    {"respond", s.respond_ms}};
  j["replay_size"] = s.replay_size;
  j["queue_depth"] = s.queue_depth;
  double mean_batch = 0.0;
  std::uint64_t total = 0;
  for (std::size_t b = 0; b < s.batcher.size_histogram.size(); ++b) {
    mean_batch += static_cast<double>(b * s.batcher.size_histogram[b]);
    total += s.batcher.size_histogram[b];
  }
  j["batcher"] = {{"submitted", s.batcher.submitted},
                  {"batches", s.batcher.batches},
                  {"deadline_batches", s.batcher.deadline_batches},
                  {"dropped", s.batcher.dropped},
                  {"mean_batch", total ? mean_batch / total : 0.0},
                  {"size_histogram", s.batcher.size_histogram}};
  j["engine"] = {{"requests", s.engine.requests},
                 {"forwards", s.engine.forwards},
                 {"records_emitted", s.engine.records_emitted},
                 {"records_overlap", s.engine.records_overlap},
                 {"records_discarded", s.engine.records_discarded},
                 {"rejected", s.engine.rejected}};
  j["loss"] = s.last_train.loss;
  j["grad_norm"] = s.last_train.grad_norm;
  return j.dump();
}

LearnerService::LearnerService(RunConfig config)
    : config_((config.validate(), std::move(config))),
      net_(config_.network_spec()),
      batcher_(config_.inference_batch_size,
               std::chrono::microseconds(config_.inference_timeout_us)),
      traj_queue_(config_.effective_queue_capacity(), config_.queue_policy),
      vtrace_batches_(2),
      q_batches_(2) {
  nn::ParamSnapshot init = config_.restore.empty()
                               ? net_.init_params(config_.seed)
                               : nn::load_checkpoint(config_.restore);
  trainer_ = std::make_unique<Trainer>(config_, net_, init);
  cell_.publish(trainer_->params());
  if (config_.retain_snapshots) archive_.add(trainer_->params());
  if (q_mode()) {
    replay_ = std::make_unique<replay::PrioritizedBuffer>(replay_config(config_));
  }
  TrajectorySink sink;
  if (config_.train || config_.retained_trajectories > 0) {
    sink = [this](Trajectory&& t) { on_trajectory(std::move(t)); };
  }
  engine_ = std::make_unique<InferenceEngine>(config_, net_, cell_, std::move(sink));
  if (config_.metrics == "-") {
    metrics_out_ = &std::cout;
  } else if (!config_.metrics.empty()) {
    metrics_file_ = std::make_unique<std::ofstream>(config_.metrics);
    if (!*metrics_file_) throw ConfigError("cannot open metrics file " + config_.metrics);
    metrics_out_ = metrics_file_.get();
  }
}

LearnerService::~LearnerService() {
  stop();
  shutdown();
}

std::string LearnerService::address() const {
  return listener_ ? listener_->address() : config_.listen;
}

void LearnerService::start() {
  listener_ = std::make_unique<net::Listener>(config_.listen);
  started_ = Clock::now();
  acceptor_ = std::thread([this] { accept_loop(); });
  for (std::size_t i = 0; i < config_.inference_workers; ++i) {
    inference_.emplace_back([this] { inference_loop(); });
  }
  if (config_.train) {
    for (std::size_t i = 0; i < config_.prefetch_workers; ++i) {
      prefetch_.emplace_back([this] { prefetch_loop(); });
    }
    trainer_thread_ = std::thread([this] { train_loop(); });
  }
  if (metrics_out_) metrics_ = std::thread([this] { metrics_loop(); });
}

void LearnerService::stop() {
  {
    std::lock_guard lock(stop_mu_);
    stop_ = true;
  }
  stop_cv_.notify_all();
  gate_cv_.notify_all();
}

void LearnerService::wait() {
  {
    std::unique_lock lock(stop_mu_);
    stop_cv_.wait(lock, [&] { return stop_.load(); });
  }
  shutdown();
}

void LearnerService::emit_metrics(const std::string& line) {
  if (!metrics_out_) return;
  std::lock_guard lock(metrics_mu_);
  *metrics_out_ << line << '\n';
  metrics_out_->flush();
}

void LearnerService::shutdown() {
  if (shut_down_.exchange(true)) return;
  stop();
  {
    std::vector<std::shared_ptr<Connection>> all;
    {
      std::lock_guard lock(conns_mu_);
      for (auto& [id, c] : conns_) all.push_back(c);
    }
    for (auto& c : all) notify_shutdown(*c);
  }
  batcher_.shutdown();
  traj_queue_.close();
  vtrace_batches_.close();
  q_batches_.close();
  if (acceptor_.joinable()) acceptor_.join();
  for (auto& t : inference_) t.join();
  for (auto& t : prefetch_) t.join();
  if (trainer_thread_.joinable()) trainer_thread_.join();
  if (metrics_.joinable()) metrics_.join();
  if (listener_) listener_->close();

  std::vector<std::shared_ptr<Connection>> all;
  {
    std::lock_guard lock(conns_mu_);
    for (auto& [id, c] : conns_) all.push_back(c);
    for (auto& c : dead_) all.push_back(c);
  }
  for (auto& c : all) {
    if (c->reader.joinable()) c->reader.join();
  }

  if (!config_.checkpoint.empty()) {
    nn::save_checkpoint(config_.checkpoint, *cell_.load());
  }
  if (metrics_out_) {
    auto j = json::parse(to_json(summary()));
    j["event"] = "summary";
    emit_metrics(j.dump());
  }
}

void LearnerService::accept_loop() {
  while (!stop_) {
    std::optional<net::Socket> s;
    try {
      s = listener_->accept(std::chrono::milliseconds(100));
    } catch (const net::SocketError&) {
      continue;
    }
    if (!s) continue;
    auto c = std::make_shared<Connection>();
    c->socket = std::move(*s);
    {
      std::lock_guard lock(conns_mu_);
      if (stop_) break;
      c->id = next_conn_++;
      conns_[c->id] = c;
      c->reader = std::thread([this, c] { read_loop(c); });
    }
  }
}

void LearnerService::send(Connection& c, const std::vector<std::uint8_t>& bytes) {
  if (c.closed) return;
  std::lock_guard lock(c.write_mu);
  try {
    c.socket.write_all(bytes);
  } catch (const net::SocketError&) {
    c.closed = true;
    c.socket.shutdown();
  }
}

void LearnerService::broadcast_error(std::uint16_t code,
                                     const std::string& message) {
  std::vector<std::shared_ptr<Connection>> all;
  {
    std::lock_guard lock(conns_mu_);
    for (auto& [id, c] : conns_) all.push_back(c);
  }
  const auto bytes = wire::encode(wire::ErrorMsg{code, message});
  for (auto& c : all) send(*c, bytes);
}

void LearnerService::notify_shutdown(Connection& c) {
  if (c.notified.exchange(true)) return;
  const bool budget = config_.total_frames > 0 && frames_ >= config_.total_frames;
  send(c, wire::encode(wire::ErrorMsg{
              wire::kErrShutdown,
              budget ? "frame budget reached" : "learner shutting down"}));
}

void LearnerService::close_connection(const std::shared_ptr<Connection>& c) {
  c->closed = true;
  batcher_.close_connection(c->id);
  engine_->drop_actor(c->id);
  c->socket.shutdown();
  std::lock_guard lock(conns_mu_);
  if (conns_.erase(c->id)) dead_.push_back(c);
}

void LearnerService::read_loop(std::shared_ptr<Connection> c) {
  wire::FrameDecoder decoder;
  std::vector<std::uint8_t> buf(1 << 16);
  try {
    while (!stop_ && !c->closed) {
      const auto n = c->socket.read_for(buf, std::chrono::milliseconds(100));
      if (!n) continue;
      if (*n == 0) break;
      decoder.feed({buf.data(), *n});
      while (auto msg = decoder.next()) {
        if (auto* hello = std::get_if<wire::Hello>(&*msg)) {
          if (c->hello) throw ProtocolError("second hello on one connection");
          engine_->register_actor(c->id, hello->actor_id, hello->num_envs);
          c->num_envs = hello->num_envs;
          batcher_.open_connection(c->id);
          c->hello = true;
        } else if (auto* req = std::get_if<wire::StepRequest>(&*msg)) {
          if (!c->hello) throw ProtocolError("step request before hello");
          if (req->env_id >= c->num_envs) {
            throw ProtocolError("env id " + std::to_string(req->env_id) +
                                " out of range");
          }
          batcher_.submit(c->id, std::move(*req));
        } else {
          throw ProtocolError("unexpected message type from actor");
        }
      }
    }
  } catch (const ProtocolError& e) {
    send(*c, wire::encode(wire::ErrorMsg{wire::kErrProtocol, e.what()}));
  } catch (const net::SocketError&) {
  }
  if (stop_ && !c->closed) {
    // Let the actor read the shutdown notice before the socket goes away;
    // closing with unread input would reset the connection.
    notify_shutdown(*c);
    {
      std::lock_guard lock(c->write_mu);
      c->socket.shutdown_write();
    }
    const auto until = Clock::now() + std::chrono::milliseconds(500);
    try {
      while (Clock::now() < until) {
        const auto n = c->socket.read_for(buf, std::chrono::milliseconds(50));
        if (n && *n == 0) break;
      }
    } catch (const net::SocketError&) {
    }
  }
  close_connection(c);
}

bool LearnerService::training_allowed() const {
  const std::uint64_t chunk = config_.batch_size * config_.q.trained_steps();
  const double budget = config_.q.replay_ratio * static_cast<double>(frames_.load());
  return static_cast<double>(scheduled_transitions_.load() + chunk) <= budget;
}

bool LearnerService::generation_allowed() const {
  if (!config_.train || !replay_ || !replay_->ready()) return true;
  const std::uint64_t chunk = config_.batch_size * config_.q.trained_steps();
  const double ahead = config_.q.replay_ratio * static_cast<double>(frames_.load()) -
                       static_cast<double>(scheduled_transitions_.load());
  return ahead <= static_cast<double>(4 * chunk);
}

void LearnerService::inference_loop() {
  std::vector<InferenceItem> items;
  std::map<std::uint64_t, std::vector<std::uint8_t>> out;
  std::vector<double> lat;
  while (!stop_) {
    if (q_mode() && !generation_allowed()) {
      std::unique_lock lock(gate_mu_);
      gate_cv_.wait_for(lock, std::chrono::milliseconds(2));
      continue;
    }
    auto batch = batcher_.poll(std::chrono::milliseconds(50));
    if (!batch) continue;
    items.clear();
    for (const auto& e : batch->entries) items.push_back({e.conn, &e.request});
    std::vector<std::optional<std::uint32_t>> actions;
    const auto fwd0 = Clock::now();
    try {
      actions = engine_->serve(items);
    } catch (const NotReadyError& e) {
      for (const auto& entry : batch->entries) {
        batcher_.complete(entry.conn, entry.request.env_id);
        out[entry.conn];
      }
      const auto bytes = wire::encode(wire::ErrorMsg{wire::kErrNotReady, e.what()});
      for (auto& [conn, b] : out) b = bytes;
    } catch (const NumericError& e) {
      std::cerr << "inference failed: " << e.what() << '\n';
      for (const auto& entry : batch->entries) {
        batcher_.complete(entry.conn, entry.request.env_id);
      }
      broadcast_error(wire::kErrInternal, e.what());
      stop();
      break;
    }
    const auto fwd1 = Clock::now();
    std::uint64_t answered = 0;
    std::vector<std::uint64_t> bad;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const auto& e = batch->entries[i];
      batcher_.complete(e.conn, e.request.env_id);
      if (actions[i]) {
        wire::encode(wire::ActionResponse{e.request.env_id, *actions[i]}, out[e.conn]);
        ++answered;
      } else {
        bad.push_back(e.conn);
      }
    }
    for (auto& [conn, bytes] : out) {
      if (bytes.empty()) continue;
      std::shared_ptr<Connection> c;
      {
        std::lock_guard lock(conns_mu_);
        auto it = conns_.find(conn);
        if (it != conns_.end()) c = it->second;
      }
      if (c) send(*c, bytes);
      bytes.clear();
    }
    for (auto conn : bad) {
      std::lock_guard lock(conns_mu_);
      auto it = conns_.find(conn);
      if (it != conns_.end()) {
        send(*it->second, wire::encode(wire::ErrorMsg{
                              wire::kErrProtocol, "request for unknown slot"}));
        it->second->socket.shutdown();
      }
    }
    const auto now = Clock::now();
    using ms = std::chrono::duration<double, std::milli>;
    lat.clear();
    for (const auto& e : batch->entries) {
      lat.push_back(ms(now - e.submitted).count());
    }
    latency_ms_.add_range(lat.begin(), lat.end());
    lat.clear();
    for (const auto& e : batch->entries) {
      lat.push_back(ms(batch->formed_at - e.submitted).count());
    }
    batch_wait_ms_.add_range(lat.begin(), lat.end());
    const double fwd_ms = ms(fwd1 - fwd0).count();
    forward_ms_.add(fwd_ms);
    respond_ms_.add(ms(now - fwd1).count());
    {
      std::lock_guard lock(forward_total_mu_);
      forward_total_ms_ += fwd_ms;
    }
    const std::uint64_t total = frames_.fetch_add(answered) + answered;
    if (q_mode()) gate_cv_.notify_all();
    if (config_.total_frames > 0 && total >= config_.total_frames) stop();
  }
}

void LearnerService::on_trajectory(Trajectory&& t) {
  if (config_.retained_trajectories > 0) {
    std::lock_guard lock(retained_mu_);
    retained_.push_back(t);
    while (retained_.size() > config_.retained_trajectories) retained_.pop_front();
  }
  if (!config_.train) return;
  if (q_mode()) {
    replay_->insert(std::move(t));
    gate_cv_.notify_all();
  } else {
    traj_queue_.push(std::move(t));
  }
}

std::vector<Trajectory> LearnerService::retained() const {
  std::lock_guard lock(retained_mu_);
  return {retained_.begin(), retained_.end()};
}

void LearnerService::prefetch_loop() {
  while (!stop_) {
    if (q_mode()) {
      {
        std::unique_lock lock(gate_mu_);
        gate_cv_.wait_for(lock, std::chrono::milliseconds(5), [&] {
          return stop_ || (replay_->ready() && training_allowed());
        });
        if (stop_) break;
        if (!replay_->ready() || !training_allowed()) continue;
        scheduled_transitions_ += config_.batch_size * config_.q.trained_steps();
      }
      auto batch = replay_->sample(config_.batch_size);
      if (!batch) continue;
      gate_cv_.notify_all();
      if (!q_batches_.push(std::move(*batch))) break;
    } else {
      auto t = traj_queue_.pop_for(std::chrono::milliseconds(100));
      if (!t) {
        if (traj_queue_.closed()) break;
        continue;
      }
      std::vector<Trajectory> ready;
      {
        std::lock_guard lock(staging_mu_);
        staging_.push_back(std::move(*t));
        if (staging_.size() == config_.batch_size) ready.swap(staging_);
      }
      if (!ready.empty() && !vtrace_batches_.push(std::move(ready))) break;
    }
  }
}

void LearnerService::train_loop() {
  while (!stop_) {
    TrainMetrics m;
    if (q_mode()) {
      auto batch = q_batches_.pop_for(std::chrono::milliseconds(100));
      if (!batch) continue;
      m = trainer_->train_q(*batch);
      if (m.applied) replay_->update_priorities(batch->ids, m.priorities);
    } else {
      auto batch = vtrace_batches_.pop_for(std::chrono::milliseconds(100));
      if (!batch) continue;
      m = trainer_->train_vtrace(*batch);
    }
    if (m.applied) {
      auto p = trainer_->params();
      cell_.publish(p);
      if (config_.retain_snapshots) archive_.add(p);
    } else {
      std::cerr << "skipped update with non-finite loss or gradient\n";
    }
    ++batches_trained_;
    std::lock_guard lock(train_mu_);
    updates_ = trainer_->updates();
    skipped_ = trainer_->skipped();
    syncs_ = trainer_->target_syncs();
    last_train_ = std::move(m);
  }
}

LearnerSummary LearnerService::summary() const {
  LearnerSummary s;
  s.frames = frames_.load();
  s.elapsed_s = std::chrono::duration<double>(Clock::now() - started_).count();
  s.fps = s.elapsed_s > 0 ? static_cast<double>(s.frames) / s.elapsed_s : 0.0;
  {
    std::lock_guard lock(train_mu_);
    s.updates = updates_;
    s.skipped_updates = skipped_;
    s.target_syncs = syncs_;
    s.last_train = last_train_;
  }
  s.batches_trained = batches_trained_.load();
  s.engine = engine_->counters();
  s.trajectories = s.engine.trajectories;
  s.episodes = s.engine.episodes;
  s.mean_return_100 = engine_->mean_recent_return(100);
  s.version = cell_.load()->version;
  s.latency_ms = latency_ms_.summary();
  s.batch_wait_ms = batch_wait_ms_.summary().mean;
  s.forward_ms = forward_ms_.summary().mean;
  s.respond_ms = respond_ms_.summary().mean;
  {
    std::lock_guard lock(forward_total_mu_);
    s.forward_ms_total = forward_total_ms_;
  }
  s.batcher = batcher_.stats();
  s.replay_size = replay_ ? replay_->size() : 0;
  s.queue_depth = traj_queue_.size();
  return s;
}

void LearnerService::metrics_loop() {
  auto last = Clock::now();
  std::uint64_t last_frames = 0, last_updates = 0;
  const auto interval = std::chrono::duration<double>(config_.metrics_interval_s);
  while (true) {
    {
      std::unique_lock lock(stop_mu_);
      if (stop_cv_.wait_for(lock, interval, [&] { return stop_.load(); })) break;
    }
    const auto now = Clock::now();
    const double dt = std::chrono::duration<double>(now - last).count();
    const LearnerSummary s = summary();
    json j;
    j["event"] = "metrics";
    j["t"] = s.elapsed_s;
    j["frames"] = s.frames;
    j["fps"] = dt > 0 ? static_cast<double>(s.frames - last_frames) / dt : 0.0;
    j["updates"] = s.updates;
    j["updates_per_s"] =
        dt > 0 ? static_cast<double>(s.updates - last_updates) / dt : 0.0;
    j["queue_depth"] = s.queue_depth;
    j["replay_size"] = s.replay_size;
    j["episodes"] = s.episodes;
    j["mean_return_100"] = s.mean_return_100;
    j["version"] = s.version;
    j["loss"] = s.last_train.loss;
    j["grad_norm"] = s.last_train.grad_norm;
    j["latency_ms"] = percentiles_json(s.latency_ms);
    emit_metrics(j.dump());
    last = now;
    last_frames = s.frames;
    last_updates = s.updates;
  }
}

}  // namespace seedling::learner
