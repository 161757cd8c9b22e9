#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "seedling/config.h"
#include "seedling/nn.h"
#include "seedling/stats.h"

namespace seedling::bench {

// Hourly cloud prices in USD.
struct ResourcePricing {
  double cpu_core_per_hour = 0.0475;
  double p100_per_hour = 1.46;
  double tpu_core_per_hour = 1.00;

  void validate() const;
  // Price of one accelerator of `kind` ("p100" or "tpu"); throws ConfigError
  // for anything else.
  double accelerator_price(const std::string& kind) const;
};

// JSON object with any of the three price fields; missing fields keep the
// defaults.
ResourcePricing load_pricing(const std::string& path);

struct Accelerators {
  std::string kind;
  double count = 0.0;
};

// Parses "kind:count".
Accelerators parse_accelerators(const std::string& text);

// USD to process one billion frames at `fps`.
double cost_per_billion(double fps, double cpu_cores,
                        const std::vector<Accelerators>& accelerators,
                        const ResourcePricing& pricing = {});

struct StageBreakdown {
  double wire_ms = 0.0;        // end-to-end minus learner-side time
  double batch_wait_ms = 0.0;  // submit until the batch formed
  double forward_ms = 0.0;     // batched inference per batch
  double respond_ms = 0.0;     // encoding and writing responses
};

// What a report was measured on; reports can only be compared when these
// agree.
struct BenchSetup {
  std::string env = "catch";
  std::vector<std::size_t> mlp_hidden{64};
  std::size_t lstm_units = 64;
  std::string algo = "vtrace";

  bool operator==(const BenchSetup&) const = default;
};

struct LatencyReport {
  std::string mode;  // "central" or "local"
  BenchSetup setup;
  double p50_ms = 0.0, p95_ms = 0.0, p99_ms = 0.0;
  double fps = 0.0;
  double forward_ms_per_frame = 0.0;
  double mean_batch = 0.0;
  std::vector<std::uint64_t> batch_histogram;  // index = batch size
  StageBreakdown stages;
  std::size_t actors = 0, envs_per_actor = 0, inference_batch = 0;
  std::uint64_t frames = 0;

  std::string to_json() const;
};

struct ThroughputConfig {
  std::size_t actors = 4;
  std::size_t envs_per_actor = 16;
  std::size_t inference_batch = 64;
  std::uint64_t inference_timeout_us = 1000;
  std::size_t inference_workers = 1;
  envs::EnvKind env = envs::EnvKind::kCatch;
  std::vector<std::size_t> mlp_hidden{64};
  std::size_t lstm_units = 64;
  double duration_s = 15.0;
  double warmup_s = 10.0;
  std::string listen = "127.0.0.1:0";
  std::string actor_binary = "seedling-actor";
  std::uint64_t seed = 1;

  void validate() const;
  BenchSetup setup() const;
};

// Starts an inference-only learner in this process and actor processes
// against it, and reports what the actors measured after the warmup.
LatencyReport run_throughput_bench(const ThroughputConfig& config);

// Time per frame of one batched forward pass of `spec` at `batch`.
double forward_ms_per_frame(const nn::NetworkSpec& spec, std::size_t batch,
                            double min_seconds = 0.2, std::uint64_t seed = 1);

// Report of forward passes alone, labelled with the given mode.
LatencyReport forward_report(const BenchSetup& setup, std::size_t obs_dim,
                             std::size_t num_actions, std::size_t batch,
                             const std::string& mode, double min_seconds = 0.2);

struct ModeComparison {
  double fps_ratio = 0.0;            // central / local
  double forward_ratio = 0.0;        // per-frame forward time, central / local
  double central_forward_ms = 0.0;
  double local_forward_ms = 0.0;

  std::string to_table() const;
};

// Throws ConfigError when the reports come from different setups.
ModeComparison compare_inference_modes(const LatencyReport& central,
                                       const LatencyReport& local);

}  // namespace seedling::bench
