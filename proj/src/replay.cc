#include "seedling/replay.h"

#include <algorithm>
#include <bit>
#include <cmath>

namespace seedling::replay {

SumTree::SumTree(std::size_t capacity)
    : leaves_(std::bit_ceil(std::max<std::size_t>(capacity, 1))),
      nodes_(2 * leaves_, 0.0) {}

void SumTree::set(std::size_t index, double value) {
  std::size_t i = leaves_ + index;
  nodes_[i] = value;
  for (i /= 2; i >= 1; i /= 2) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
}

std::size_t SumTree::find(double u) const {
  std::size_t i = 1;
  while (i < leaves_) {
    const double left = nodes_[2 * i];
    const double right = nodes_[2 * i + 1];
    if (u < left || right <= 0.0) {
      i = 2 * i;
    } else {
      u -= left;
      i = 2 * i + 1;
    }
  }
  return i - leaves_;
}

void SumTree::rebuild() {
  for (std::size_t i = leaves_ - 1; i >= 1; --i) {
    nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
  }
}

PrioritizedBuffer::PrioritizedBuffer(PrioritizedConfig config)
    : config_(config),
      tree_(config.capacity),
      items_(config.capacity),
      priorities_(config.capacity, 0.0),
      rng_(config.seed) {
  if (config_.capacity == 0) throw ConfigError("replay capacity must be >= 1");
  if (config_.min_size > config_.capacity) {
    throw ConfigError("replay min_size exceeds capacity");
  }
}

void PrioritizedBuffer::set_priority(std::size_t slot, double p) {
  priorities_[slot] = p;
  tree_.set(slot, std::pow(p, config_.priority_exponent));
  max_priority_ = std::max(max_priority_, p);
  if (++updates_since_rebuild_ >= config_.rebuild_interval) {
    tree_.rebuild();
    updates_since_rebuild_ = 0;
  }
}

std::uint64_t PrioritizedBuffer::insert(Trajectory seq,
                                        std::optional<double> priority) {
  return insert(std::make_shared<const Trajectory>(std::move(seq)), priority);
}

std::uint64_t PrioritizedBuffer::insert(std::shared_ptr<const Trajectory> seq,
                                        std::optional<double> priority) {
  if (!seq) throw ConfigError("null sequence");
  if (config_.sequence_records != 0 &&
      seq->records() != config_.sequence_records) {
    throw ConfigError("sequence length does not match the replay config");
  }
  if (priority && !(*priority >= 0.0 && std::isfinite(*priority))) {
    throw ConfigError("priority must be finite and non-negative");
  }
  std::lock_guard lock(mu_);
  const double p = priority ? *priority
                            : (max_priority_ > 0.0 ? max_priority_ : 1.0);
  const std::uint64_t id = next_id_++;
  const std::size_t slot = static_cast<std::size_t>(id % config_.capacity);
  items_[slot] = std::move(seq);
  set_priority(slot, p);
  return id;
}

std::optional<SampledBatch> PrioritizedBuffer::sample(std::size_t batch_size) {
  std::lock_guard lock(mu_);
  const std::size_t n = static_cast<std::size_t>(
      std::min<std::uint64_t>(next_id_, config_.capacity));
  if (n < std::max<std::size_t>(config_.min_size, 1)) return std::nullopt;
  const double total = tree_.total();
  if (!(total > 0.0)) return std::nullopt;
  SampledBatch out;
  std::uniform_real_distribution<double> uni(0.0, total);
  double max_w = 0.0;
  for (std::size_t i = 0; i < batch_size; ++i) {
    double u = uni(rng_);
    if (u >= total) u = std::nextafter(total, 0.0);
    const std::size_t slot = tree_.find(u);
    const double prob = tree_.get(slot) / total;
    const double w = std::pow(static_cast<double>(n) * prob,
                              -config_.importance_exponent);
    max_w = std::max(max_w, w);
    // Map the ring slot back to the id currently living there.
    const std::uint64_t base = next_id_ - n;
    const std::uint64_t offset =
        (slot + config_.capacity - base % config_.capacity) % config_.capacity;
    out.ids.push_back(base + offset);
    out.sequences.push_back(items_[slot]);
    out.probabilities.push_back(prob);
    out.weights.push_back(w);
  }
  for (double& w : out.weights) w /= max_w;
  return out;
}

void PrioritizedBuffer::update_priorities(std::span<const std::uint64_t> ids,
                                          std::span<const double> priorities) {
  if (ids.size() != priorities.size()) {
    throw ConfigError("ids and priorities differ in length");
  }
  for (double p : priorities) {
    if (!(p >= 0.0 && std::isfinite(p))) {
      throw ConfigError("priority must be finite and non-negative");
    }
  }
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!live(ids[i])) continue;
    set_priority(static_cast<std::size_t>(ids[i] % config_.capacity),
                 priorities[i]);
  }
}

std::size_t PrioritizedBuffer::size() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::min<std::uint64_t>(next_id_, config_.capacity));
}

std::uint64_t PrioritizedBuffer::inserted() const {
  std::lock_guard lock(mu_);
  return next_id_;
}

bool PrioritizedBuffer::contains(std::uint64_t id) const {
  std::lock_guard lock(mu_);
  return live(id);
}

double PrioritizedBuffer::priority(std::uint64_t id) const {
  std::lock_guard lock(mu_);
  if (!live(id)) throw ConfigError("unknown or evicted sequence id");
  return priorities_[id % config_.capacity];
}

double PrioritizedBuffer::tree_total() const {
  std::lock_guard lock(mu_);
  return tree_.total();
}

double PrioritizedBuffer::exact_total() const {
  std::lock_guard lock(mu_);
  const std::uint64_t n = std::min<std::uint64_t>(next_id_, config_.capacity);
  double sum = 0.0;
  for (std::uint64_t id = next_id_ - n; id < next_id_; ++id) {
    sum += std::pow(priorities_[id % config_.capacity],
                    config_.priority_exponent);
  }
  return sum;
}

double PrioritizedBuffer::max_priority() const {
  std::lock_guard lock(mu_);
  return max_priority_;
}

}  // namespace seedling::replay
