#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "seedling/trajectory.h"

namespace seedling::replay {

enum class OverflowPolicy { kBlock, kDropOldest };

// Bounded multi-producer/multi-consumer FIFO.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity,
                        OverflowPolicy policy = OverflowPolicy::kBlock)
      : capacity_(capacity), policy_(policy) {
    if (capacity_ == 0) throw ConfigError("queue capacity must be >= 1");
  }

  // Returns false if the queue was closed before the item could be added.
  bool push(T item) {
    std::unique_lock lock(mu_);
    if (policy_ == OverflowPolicy::kBlock) {
      not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
      if (closed_) return false;
    } else {
      if (closed_) return false;
      if (items_.size() == capacity_) {
        items_.pop_front();
        ++dropped_;
      }
    }
    items_.push_back(std::move(item));
    ++pushed_;
    not_empty_.notify_one();
    return true;
  }

  // Blocks until an item arrives or the queue is closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    return take(lock);
  }

  template <typename Rep, typename Period>
  std::optional<T> pop_for(std::chrono::duration<Rep, Period> timeout) {
    std::unique_lock lock(mu_);
    not_empty_.wait_for(lock, timeout,
                        [&] { return closed_ || !items_.empty(); });
    return take(lock);
  }

  std::optional<T> try_pop() {
    std::unique_lock lock(mu_);
    return take(lock);
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t pushed() const {
    std::lock_guard lock(mu_);
    return pushed_;
  }
  std::uint64_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }
  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

 private:
  std::optional<T> take(std::unique_lock<std::mutex>&) {
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  const std::size_t capacity_;
  const OverflowPolicy policy_;
  mutable std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
  std::deque<T> items_;
  bool closed_ = false;
  std::uint64_t pushed_ = 0;
  std::uint64_t dropped_ = 0;
};

using TrajectoryQueue = BoundedQueue<Trajectory>;

// Binary tree of partial sums over a flat array; leaves hold p^alpha.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  std::size_t capacity() const { return leaves_; }
  void set(std::size_t index, double value);
  double get(std::size_t index) const { return nodes_[leaves_ + index]; }
  double total() const { return nodes_[1]; }
  // Leaf whose cumulative range contains u, for u in [0, total()). Leaves
  // with zero mass are never returned while total() > 0.
  std::size_t find(double u) const;
  // Recomputes every internal node from the leaves.
  void rebuild();

 private:
  std::size_t leaves_;
  std::vector<double> nodes_;  // 1-based heap layout
};

struct PrioritizedConfig {
  std::size_t capacity = 2000;
  std::size_t min_size = 100;
  double priority_exponent = 0.9;
  double importance_exponent = 0.6;
  std::size_t sequence_records = 0;  // 0 = accept any length
  std::uint64_t rebuild_interval = 1'000'000;
  std::uint64_t seed = 0;
};

struct SampledBatch {
  std::vector<std::shared_ptr<const Trajectory>> sequences;
  std::vector<std::uint64_t> ids;
  std::vector<double> probabilities;
  std::vector<double> weights;  // normalized by the batch maximum
};

// Fixed-capacity prioritized sequence store with FIFO eviction. Ids are the
// global insertion index, so an id of an evicted sequence never aliases a
// newer one.
class PrioritizedBuffer {
 public:
  explicit PrioritizedBuffer(PrioritizedConfig config);

  // Stores the sequence with the given priority, or with the largest
  // priority seen so far (1.0 when none) if omitted.
  std::uint64_t insert(Trajectory seq, std::optional<double> priority = {});
  std::uint64_t insert(std::shared_ptr<const Trajectory> seq,
                       std::optional<double> priority = {});

  // nullopt while size() < min_size.
  std::optional<SampledBatch> sample(std::size_t batch_size);

  // Ids that were evicted are skipped. Throws ConfigError on a negative or
  // non-finite priority.
  void update_priorities(std::span<const std::uint64_t> ids,
                         std::span<const double> priorities);

  std::size_t size() const;
  bool ready() const { return size() >= config_.min_size; }
  std::uint64_t inserted() const;
  bool contains(std::uint64_t id) const;
  double priority(std::uint64_t id) const;
  // Sum of p^alpha as kept by the tree, and recomputed from scratch.
  double tree_total() const;
  double exact_total() const;
  double max_priority() const;
  const PrioritizedConfig& config() const { return config_; }

 private:
  bool live(std::uint64_t id) const {
    return id < next_id_ && next_id_ - id <= config_.capacity;
  }
  void set_priority(std::size_t slot, double p);

  PrioritizedConfig config_;
  mutable std::mutex mu_;
  SumTree tree_;
  std::vector<std::shared_ptr<const Trajectory>> items_;
  std::vector<double> priorities_;
  std::uint64_t next_id_ = 0;
  std::uint64_t updates_since_rebuild_ = 0;
  double max_priority_ = 0.0;
  std::mt19937_64 rng_;
};

}  // namespace seedling::replay
