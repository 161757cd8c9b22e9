#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <vector>

#include "seedling/config.h"
#include "seedling/nn.h"
#include "seedling/replay.h"
#include "seedling/trajectory.h"

namespace seedling::learner {

struct TrainMetrics {
  bool applied = false;  // false when the update was skipped
  double loss = 0.0;
  double policy_loss = 0.0;    // V-trace
  double baseline_loss = 0.0;  // V-trace
  double entropy_loss = 0.0;   // V-trace
  double grad_norm = 0.0;      // before clipping
  double mean_abs_td = 0.0;    // Q-learning
  std::uint64_t version = 0;   // parameter version after the step
  std::size_t transitions = 0; // steps that contributed to the loss
  std::vector<double> priorities;  // Q-learning, one per sequence
};

// Owns the online (and, for Q-learning, target) parameters and the
// optimizer. Not thread-safe: one trainer thread drives it.
class Trainer {
 public:
  Trainer(const RunConfig& config, const nn::Network& network,
          nn::ParamSnapshot initial);

  // V-trace actor-critic update on complete unrolls of equal length.
  TrainMetrics train_vtrace(std::span<const Trajectory> batch);
  // Recurrent double-Q update on replay sequences, weighted by importance
  // weights; returns the new per-sequence priorities.
  TrainMetrics train_q(const replay::SampledBatch& batch);

  nn::SnapshotPtr params() const { return params_; }
  nn::SnapshotPtr target() const { return target_; }
  std::uint64_t updates() const { return updates_; }
  std::uint64_t skipped() const { return skipped_; }
  std::uint64_t target_syncs() const { return target_syncs_; }

 private:
  TrainMetrics apply(nn::Gradients& grads, TrainMetrics m);

  const RunConfig config_;
  const nn::Network& net_;
  nn::Adam adam_;
  nn::SnapshotPtr params_;
  nn::SnapshotPtr target_;
  std::uint64_t updates_ = 0;
  std::uint64_t skipped_ = 0;
  std::uint64_t target_syncs_ = 0;
};

// Keeps every published snapshot by version (for off-policy audits).
class SnapshotArchive {
 public:
  void add(nn::SnapshotPtr s) {
    std::lock_guard lock(mu_);
    snaps_[s->version] = std::move(s);
  }
  nn::SnapshotPtr get(std::uint64_t version) const {
    std::lock_guard lock(mu_);
    auto it = snaps_.find(version);
    return it == snaps_.end() ? nullptr : it->second;
  }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return snaps_.size();
  }

 private:
  mutable std::mutex mu_;
  std::map<std::uint64_t, nn::SnapshotPtr> snaps_;
};

}  // namespace seedling::learner
