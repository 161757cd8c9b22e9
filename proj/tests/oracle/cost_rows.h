#pragma once

#include <string>
#include <vector>

#include "seedling/bench.h"

namespace oracle {

// Published training-cost rows: measured fps and resources, and the stated
// USD per billion frames.
struct CostRow {
  std::string label;
  double fps;
  double cpus;
  seedling::bench::Accelerators accel;
  double stated_usd;
  bool central;  // central-inference rows
};

inline std::vector<CostRow> cost_rows() {
  return {
      {"dmlab impala default", 30000, 176, {"p100", 1}, 90, false},
      {"dmlab impala medium", 16500, 130, {"p100", 1}, 128, false},
      {"dmlab impala large", 7300, 100, {"p100", 1}, 236, false},
      {"dmlab central default", 74000, 104, {"tpu", 2}, 25, true},
      {"dmlab central medium", 34000, 48, {"tpu", 2}, 35, true},
      {"dmlab central large", 16000, 24, {"tpu", 2}, 54, true},
      {"football impala default", 11000, 400, {"p100", 2}, 553, false},
      {"football impala medium", 7000, 300, {"p100", 2}, 681, false},
      {"football impala large", 5300, 300, {"p100", 2}, 899, false},
      {"football central default", 17500, 416, {"tpu", 2}, 345, true},
      {"football central medium", 10500, 248, {"tpu", 2}, 365, true},
      {"football central large", 7500, 168, {"tpu", 2}, 369, true},
  };
}

}  // namespace oracle
