#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <cstdint>
#include <map>
#include <ostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "seedling/config.h"
#include "seedling/inference.h"
#include "seedling/nn.h"
#include "seedling/replay.h"
#include "seedling/socket.h"
#include "seedling/stats.h"
#include "seedling/trainer.h"
#include "seedling/wire.h"

namespace seedling::learner {

struct LearnerSummary {
  std::uint64_t frames = 0;        // StepRequests answered
  std::uint64_t updates = 0;
  std::uint64_t skipped_updates = 0;
  std::uint64_t batches_trained = 0;
  std::uint64_t trajectories = 0;
  std::uint64_t episodes = 0;
  std::uint64_t version = 0;
  std::uint64_t target_syncs = 0;
  double mean_return_100 = 0.0;
  double elapsed_s = 0.0;
  double fps = 0.0;
  Percentiles latency_ms;          // submit to response write, learner side
  double batch_wait_ms = 0.0;      // mean submit-to-batch time
  double forward_ms = 0.0;         // mean time per batched forward
  double respond_ms = 0.0;         // mean time to write one batch's replies
  double forward_ms_total = 0.0;   // summed over all batches
  wire::BatcherStats batcher;
  EngineCounters engine;
  std::size_t replay_size = 0;
  std::size_t queue_depth = 0;
  TrainMetrics last_train;
};

std::string to_json(const LearnerSummary& s);

// The learner service: protocol listener, batched inference workers,
// trajectory queue or replay buffer, prefetchers and one trainer thread.
class LearnerService {
 public:
  explicit LearnerService(RunConfig config);
  ~LearnerService();
  LearnerService(const LearnerService&) = delete;
  LearnerService& operator=(const LearnerService&) = delete;

  // Binds the listener and starts every thread. Throws on bind failure.
  void start();
  // Blocks until the frame budget is exhausted or stop() is called, then
  // shuts everything down (idempotent).
  void wait();
  void stop();
  bool stopping() const { return stop_.load(); }

  std::string address() const;
  LearnerSummary summary() const;
  const RunConfig& config() const { return config_; }
  const nn::Network& network() const { return net_; }
  nn::SnapshotPtr current_params() const { return cell_.load(); }
  // Populated only with retain_snapshots.
  const SnapshotArchive& archive() const { return archive_; }
  // The most recent `retained_trajectories` emitted trajectories.
  std::vector<Trajectory> retained() const;

 private:
  struct Connection {
    std::uint64_t id = 0;
    net::Socket socket;
    std::mutex write_mu;
    std::atomic<bool> hello{false};
    std::uint32_t num_envs = 0;
    std::atomic<bool> closed{false};
    std::atomic<bool> notified{false};  // shutdown notice sent
    std::thread reader;
  };

  void accept_loop();
  void read_loop(std::shared_ptr<Connection> conn);
  void inference_loop();
  void prefetch_loop();
  void train_loop();
  void metrics_loop();
  void on_trajectory(Trajectory&& t);
  void send(Connection& c, const std::vector<std::uint8_t>& bytes);
  void broadcast_error(std::uint16_t code, const std::string& message);
  // Sends the shutdown notice on `c` unless it already went out.
  void notify_shutdown(Connection& c);
  void close_connection(const std::shared_ptr<Connection>& c);
  bool q_mode() const { return config_.algo == Algo::kR2D2; }
  // Transitions the replay-ratio gate still allows to be scheduled.
  bool training_allowed() const;
  bool generation_allowed() const;
  void shutdown();

  const RunConfig config_;
  nn::Network net_;
  nn::SnapshotCell cell_;
  SnapshotArchive archive_;
  std::unique_ptr<Trainer> trainer_;
  std::unique_ptr<InferenceEngine> engine_;
  wire::Batcher batcher_;
  std::unique_ptr<net::Listener> listener_;

  replay::TrajectoryQueue traj_queue_;
  replay::BoundedQueue<std::vector<Trajectory>> vtrace_batches_;
  std::mutex staging_mu_;
  std::vector<Trajectory> staging_;
  std::unique_ptr<replay::PrioritizedBuffer> replay_;
  replay::BoundedQueue<replay::SampledBatch> q_batches_;

  std::atomic<bool> stop_{false};
  std::atomic<bool> shut_down_{false};
  std::atomic<std::uint64_t> frames_{0};
  std::atomic<std::uint64_t> scheduled_transitions_{0};
  std::atomic<std::uint64_t> batches_trained_{0};
  mutable std::mutex gate_mu_;
  std::condition_variable gate_cv_;
  std::mutex stop_mu_;
  std::condition_variable stop_cv_;

  mutable std::mutex conns_mu_;
  std::map<std::uint64_t, std::shared_ptr<Connection>> conns_;
  std::vector<std::shared_ptr<Connection>> dead_;  // readers left to join
  std::uint64_t next_conn_ = 1;

  mutable std::mutex train_mu_;
  TrainMetrics last_train_;
  std::uint64_t updates_ = 0, skipped_ = 0, syncs_ = 0;

  std::mutex metrics_mu_;
  std::unique_ptr<std::ostream> metrics_file_;
  std::ostream* metrics_out_ = nullptr;
  void emit_metrics(const std::string& line);
  mutable std::mutex retained_mu_;
  std::deque<Trajectory> retained_;

  SampleWindow latency_ms_{200000};
  SampleWindow batch_wait_ms_{200000};
  SampleWindow forward_ms_{50000};
  SampleWindow respond_ms_{50000};
  mutable std::mutex forward_total_mu_;
  double forward_total_ms_ = 0.0;
  std::chrono::steady_clock::time_point started_;

  std::thread acceptor_;
  std::vector<std::thread> inference_;
  std::vector<std::thread> prefetch_;
  std::thread trainer_thread_;
  std::thread metrics_;
};

}  // namespace seedling::learner
