#include <algorithm>

#include "seedling/wire.h"

namespace seedling::wire {

Batcher::Batcher(std::size_t max_batch, std::chrono::microseconds max_wait)
    : max_batch_(max_batch), max_wait_(max_wait) {
  if (max_batch_ == 0) throw ConfigError("max_batch must be >= 1");
  if (max_wait_.count() < 0) throw ConfigError("max_wait must be >= 0");
  stats_.size_histogram.assign(max_batch_ + 1, 0);
}

void Batcher::open_connection(std::uint64_t conn) {
  std::lock_guard lock(mu_);
  closed_.erase(conn);
}

void Batcher::close_connection(std::uint64_t conn) {
  std::lock_guard lock(mu_);
  closed_.insert(conn);
  const auto before = pending_.size();
  std::erase_if(pending_, [&](const BatchEntry& e) { return e.conn == conn; });
  stats_.dropped += before - pending_.size();
  std::erase_if(in_flight_, [&](const auto& k) { return k.first == conn; });
}

std::optional<std::uint64_t> Batcher::submit(std::uint64_t conn,
                                             StepRequest request) {
  std::lock_guard lock(mu_);
  if (shutdown_ || closed_.contains(conn)) {
    ++stats_.dropped;
    return std::nullopt;
  }
  const auto key = std::make_pair(conn, request.env_id);
  if (!in_flight_.insert(key).second) {
    throw ProtocolError("duplicate in-flight request for env " +
                        std::to_string(request.env_id));
  }
  BatchEntry e;
  e.ticket = next_ticket_++;
  e.conn = conn;
  e.request = std::move(request);
  e.submitted = Clock::now();
  pending_.push_back(std::move(e));
  ++stats_.submitted;
  // Wake a poller when a batch fills, or when the first entry starts a
  // deadline that some poller has to watch.
  if (pending_.size() >= max_batch_ || pending_.size() == 1) cv_.notify_one();
  return pending_.back().ticket;
}

std::optional<InferenceBatch> Batcher::poll(std::chrono::microseconds timeout) {
  std::unique_lock lock(mu_);
  const auto give_up = Clock::now() + timeout;
  for (;;) {
    if (shutdown_) return std::nullopt;
    const auto now = Clock::now();
    if (!pending_.empty()) {
      const bool full = pending_.size() >= max_batch_;
      const auto deadline = pending_.front().submitted + max_wait_;
      if (full || now >= deadline) {
        InferenceBatch batch;
        const std::size_t n = std::min(max_batch_, pending_.size());
        batch.entries.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
          batch.entries.push_back(std::move(pending_.front()));
          pending_.pop_front();
        }
        batch.formed_at = now;
        batch.deadline_triggered = !full;
        ++stats_.batches;
        if (!full) ++stats_.deadline_batches;
        ++stats_.size_histogram[n];
        // Another poller may be able to form the next batch right away.
        if (!pending_.empty()) cv_.notify_one();
        return batch;
      }
      if (now >= give_up) return std::nullopt;
      cv_.wait_until(lock, std::min(deadline, give_up));
    } else {
      if (now >= give_up) return std::nullopt;
      cv_.wait_until(lock, give_up);
    }
  }
}

void Batcher::complete(std::uint64_t conn, std::uint32_t env_id) {
  std::lock_guard lock(mu_);
  in_flight_.erase({conn, env_id});
}

void Batcher::shutdown() {
  std::lock_guard lock(mu_);
  shutdown_ = true;
  cv_.notify_all();
}

std::size_t Batcher::pending() const {
  std::lock_guard lock(mu_);
  return pending_.size();
}

BatcherStats Batcher::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace seedling::wire
