#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <span>
#include <vector>

namespace seedling {

// Nearest-rank percentile of unsorted samples; q in [0, 100]. 0 when empty.
double percentile(std::vector<double> samples, double q);

struct Percentiles {
  double p50 = 0.0, p95 = 0.0, p99 = 0.0, mean = 0.0;
  std::size_t count = 0;
};

Percentiles summarize(std::span<const double> samples);

// Thread-safe bounded sample store (keeps the most recent `capacity`).
class SampleWindow {
 public:
  explicit SampleWindow(std::size_t capacity = 100000) : capacity_(capacity) {}

  void add(double v) {
    std::lock_guard lock(mu_);
    if (samples_.size() == capacity_) samples_.pop_front();
    samples_.push_back(v);
    ++total_;
  }
  template <typename It>
  void add_range(It begin, It end) {
    std::lock_guard lock(mu_);
    for (; begin != end; ++begin) {
      if (samples_.size() == capacity_) samples_.pop_front();
      samples_.push_back(*begin);
      ++total_;
    }
  }
  std::vector<double> values() const {
    std::lock_guard lock(mu_);
    return {samples_.begin(), samples_.end()};
  }
  Percentiles summary() const;
  std::uint64_t total() const {
    std::lock_guard lock(mu_);
    return total_;
  }
  void clear() {
    std::lock_guard lock(mu_);
    samples_.clear();
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<double> samples_;
  std::uint64_t total_ = 0;
};

}  // namespace seedling
