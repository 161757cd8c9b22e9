#include "seedling/stats.h"

#include <cmath>
#include <numeric>

namespace seedling {

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) return 0.0;
  q = std::clamp(q, 0.0, 100.0);
  const std::size_t n = samples.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(samples.begin(), samples.begin() + (rank - 1), samples.end());
  return samples[rank - 1];
}

Percentiles summarize(std::span<const double> samples) {
  Percentiles p;
  p.count = samples.size();
  if (samples.empty()) return p;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  auto at = [&](double q) {
    std::size_t rank = static_cast<std::size_t>(std::ceil(q / 100.0 * sorted.size()));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
  };
  p.p50 = at(50);
  p.p95 = at(95);
  p.p99 = at(99);
  p.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
           static_cast<double>(sorted.size());
  return p;
}

Percentiles SampleWindow::summary() const {
  const auto v = values();
  return summarize(v);
}

}  // namespace seedling
