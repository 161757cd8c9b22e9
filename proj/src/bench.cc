#include "seedling/bench.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "seedling/error.h"
#include "seedling/learner.h"

extern char** environ;

namespace seedling::bench {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

pid_t spawn(const std::vector<std::string>& args) {
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, argv[0], nullptr, nullptr, argv.data(), environ);
  if (rc != 0) throw Error("cannot start " + args[0] + ": " + std::strerror(rc));
  return pid;
}

std::vector<double> read_doubles(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::vector<double> out;
  double v = 0.0;
  while (f.read(reinterpret_cast<char*>(&v), sizeof(v))) out.push_back(v);
  return out;
}

}  // namespace

void ResourcePricing::validate() const {
  for (double p : {cpu_core_per_hour, p100_per_hour, tpu_core_per_hour}) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ConfigError("prices must be finite and non-negative");
    }
  }
}

double ResourcePricing::accelerator_price(const std::string& kind) const {
  if (kind == "p100") return p100_per_hour;
  if (kind == "tpu") return tpu_core_per_hour;
  throw ConfigError("unknown accelerator kind: " + kind);
}

ResourcePricing load_pricing(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open pricing file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("bad pricing file " + path + ": " + e.what());
  }
  ResourcePricing p;
  if (j.contains("cpu_core_per_hour")) p.cpu_core_per_hour = j["cpu_core_per_hour"].get<double>();
  if (j.contains("p100_per_hour")) p.p100_per_hour = j["p100_per_hour"].get<double>();
  if (j.contains("tpu_core_per_hour")) p.tpu_core_per_hour = j["tpu_core_per_hour"].get<double>();
  p.validate();
  return p;
}

Accelerators parse_accelerators(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0) {
    throw ConfigError("accelerators must be kind:count, got '" + text + "'");
  }
  Accelerators a;
  a.kind = text.substr(0, colon);
  try {
    std::size_t used = 0;
    const std::string n = text.substr(colon + 1);
    a.count = std::stod(n, &used);
    if (used != n.size()) throw std::invalid_argument(n);
  } catch (const std::exception&) {
    throw ConfigError("bad accelerator count in '" + text + "'");
  }
  if (a.count < 0) throw ConfigError("negative accelerator count");
  ResourcePricing{}.accelerator_price(a.kind);
  return a;
}

double cost_per_billion(double fps, double cpu_cores,
                        const std::vector<Accelerators>& accelerators,
                        const ResourcePricing& pricing) {
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
  if (cpu_cores < 0) throw ConfigError("cpu core count must be non-negative");
  pricing.validate();
  double per_hour = cpu_cores * pricing.cpu_core_per_hour;
  for (const auto& a : accelerators) {
    per_hour += a.count * pricing.accelerator_price(a.kind);
  }
  const double hours = 1e9 / fps / 3600.0;
  return hours * per_hour;
}

std::string LatencyReport::to_json() const {
  json j;
  j["mode"] = mode;
  j["env"] = setup.env;
  j["mlp_hidden"] = setup.mlp_hidden;
  j["lstm_units"] = setup.lstm_units;
  j["actors"] = actors;
  j["envs_per_actor"] = envs_per_actor;
  j["inference_batch"] = inference_batch;
  j["frames"] = frames;
  j["fps"] = fps;
  j["p50_ms"] = p50_ms;
  j["p95_ms"] = p95_ms;
  j["p99_ms"] = p99_ms;
  j["forward_ms_per_frame"] = forward_ms_per_frame;
  j["mean_batch"] = mean_batch;
  j["batch_histogram"] = batch_histogram;
  j["stages_ms"] = {{"wire", stages.wire_ms},
                    {"batch_wait", stages.batch_wait_ms},
                    {"forward", stages.forward_ms},
                    {"respond", stages.respond_ms}};
  return j.dump();
}

void ThroughputConfig::validate() const {
  if (actors < 1 || envs_per_actor < 1) throw ConfigError("need actors and envs");
  if (inference_batch < 1) throw ConfigError("inference batch must be >= 1");
  if (!(duration_s > warmup_s)) {
    throw ConfigError("bench duration must exceed the warmup");
  }
}

BenchSetup ThroughputConfig::setup() const {
  BenchSetup s;
  s.env = envs::env_kind_name(env);
  s.mlp_hidden = mlp_hidden;
  s.lstm_units = lstm_units;
  return s;
}

LatencyReport run_throughput_bench(const ThroughputConfig& cfg) {
  cfg.validate();
  RunConfig rc;
  rc.algo = Algo::kVTrace;
  rc.env = envs::EnvSpec::defaults(cfg.env);
  rc.listen = cfg.listen;
  rc.mlp_hidden = cfg.mlp_hidden;
  rc.lstm_units = cfg.lstm_units;
  rc.inference_batch_size = cfg.inference_batch;
  rc.inference_timeout_us = cfg.inference_timeout_us;
  rc.inference_workers = cfg.inference_workers;
  rc.train = false;
  rc.seed = cfg.seed;

  learner::LearnerService service(rc);
  service.start();
  const std::string addr = service.address();

  char tmpl[] = "/tmp/seedling-bench-XXXXXX";
  if (!mkdtemp(tmpl)) throw Error("cannot create a temporary directory");
  const std::string dir = tmpl;

  std::vector<pid_t> pids;
  for (std::size_t i = 0; i < cfg.actors; ++i) {
    pids.push_back(spawn({cfg.actor_binary,
                          "--learner", addr,
                          "--id", std::to_string(i),
                          "--num-envs", std::to_string(cfg.envs_per_actor),
                          "--env", envs::env_kind_name(cfg.env),
                          "--seed", std::to_string(cfg.seed + i),
                          "--duration", std::to_string(cfg.duration_s),
                          "--warmup", std::to_string(cfg.warmup_s),
                          "--stats-json", dir + "/actor" + std::to_string(i) + ".json",
                          "--latency-out", dir + "/actor" + std::to_string(i) + ".lat"}));
  }
  bool failed = false;
  for (pid_t pid : pids) {
    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) failed = true;
  }
  service.stop();
  service.wait();
  const learner::LearnerSummary ls = service.summary();

  LatencyReport r;
  r.mode = cfg.inference_batch == 1 && cfg.inference_timeout_us == 0 ? "local" : "central";
  r.setup = cfg.setup();
  r.actors = cfg.actors;
  r.envs_per_actor = cfg.envs_per_actor;
  r.inference_batch = cfg.inference_batch;
  std::vector<double> lat;
  for (std::size_t i = 0; i < cfg.actors; ++i) {
    const std::string base = dir + "/actor" + std::to_string(i);
    std::ifstream f(base + ".json");
    if (f) {
      json j;
      f >> j;
      r.fps += j.value("fps", 0.0);
      r.frames += j.value("responses", std::uint64_t{0});
    }
    const auto v = read_doubles(base + ".lat");
    lat.insert(lat.end(), v.begin(), v.end());
    std::remove((base + ".json").c_str());
    std::remove((base + ".lat").c_str());
  }
  rmdir(dir.c_str());
  if (failed) throw Error("an actor process failed during the benchmark");

  const Percentiles p = summarize(lat);
  r.p50_ms = p.p50;
  r.p95_ms = p.p95;
  r.p99_ms = p.p99;
  r.batch_histogram = ls.batcher.size_histogram;
  std::uint64_t batches = 0;
  double sum = 0.0;
  for (std::size_t b = 0; b < r.batch_histogram.size(); ++b) {
    batches += r.batch_histogram[b];
    sum += static_cast<double>(b * r.batch_histogram[b]);
  }
  r.mean_batch = batches ? sum / static_cast<double>(batches) : 0.0;
  r.forward_ms_per_frame =
      ls.frames ? ls.forward_ms_total / static_cast<double>(ls.frames) : 0.0;
  r.stages.batch_wait_ms = ls.batch_wait_ms;
  r.stages.forward_ms = ls.forward_ms;
  r.stages.respond_ms = ls.respond_ms;
  r.stages.wire_ms = std::max(
      0.0, p.mean - ls.batch_wait_ms - ls.forward_ms - ls.respond_ms);
  return r;
}

double forward_ms_per_frame(const nn::NetworkSpec& spec, std::size_t batch,
                            double min_seconds, std::uint64_t seed) {
  if (batch < 1) throw ConfigError("batch must be >= 1");
  nn::Network net(spec);
  const nn::ParamSnapshot params = net.init_params(seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> obs(batch * spec.input_dim);
  for (auto& x : obs) x = u(rng);
  std::vector<std::int32_t> prev(batch, 0);
  std::vector<float> reward(batch, 0.0f);
  nn::StepInput in;
  in.batch = batch;
  in.obs = obs;
  in.prev_action = prev;
  in.prev_reward = reward;
  nn::RecurrentState state;
  if (spec.recurrent()) state = nn::RecurrentState::zeros(batch, spec.lstm_units);
  // Warm caches and the allocator.
  for (int i = 0; i < 3; ++i) state = net.forward(params, in, state).next;
  std::uint64_t calls = 0;
  const auto t0 = Clock::now();
  double elapsed = 0.0;
  do {
    for (int i = 0; i < 16; ++i) {
      auto out = net.forward(params, in, state);
      state = std::move(out.next);
      ++calls;
    }
    elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
  } while (elapsed < min_seconds);
  return elapsed * 1e3 / static_cast<double>(calls * batch);
}

LatencyReport forward_report(const BenchSetup& setup, std::size_t obs_dim,
                             std::size_t num_actions, std::size_t batch,
                             const std::string& mode, double min_seconds) {
  nn::NetworkSpec spec;
  spec.input_dim = obs_dim;
  spec.num_actions = num_actions;
  spec.mlp_hidden_sizes = setup.mlp_hidden;
  spec.lstm_units = setup.lstm_units;
  spec.head = setup.algo == "r2d2" ? nn::HeadKind::kDuelingQ : nn::HeadKind::kPolicyValue;
  LatencyReport r;
  r.mode = mode;
  r.setup = setup;
  r.inference_batch = batch;
  r.mean_batch = static_cast<double>(batch);
  r.forward_ms_per_frame = forward_ms_per_frame(spec, batch, min_seconds);
  r.fps = 1e3 / r.forward_ms_per_frame;
  r.p50_ms = r.p95_ms = r.p99_ms = r.forward_ms_per_frame * static_cast<double>(batch);
  r.stages.forward_ms = r.p50_ms;
  return r;
}

ModeComparison compare_inference_modes(const LatencyReport& central,
                                       const LatencyReport& local) {
  if (!(central.setup == local.setup)) {
    throw ConfigError("cannot compare reports from different env/net setups");
  }
  ModeComparison c;
  c.fps_ratio = local.fps > 0 ? central.fps / local.fps : 0.0;
  c.central_forward_ms = central.forward_ms_per_frame;
  c.local_forward_ms = local.forward_ms_per_frame;
  c.forward_ratio = local.forward_ms_per_frame > 0
                        ? central.forward_ms_per_frame / local.forward_ms_per_frame
                        : 0.0;
  return c;
}

std::string ModeComparison::to_table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "mode      forward ms/frame\n";
  os << "central   " << central_forward_ms << "\n";
  os << "local     " << local_forward_ms << "\n";
  os << "forward ratio (central/local) " << forward_ratio << "\n";
  os << "fps ratio (central/local)     " << fps_ratio << "\n";
  return os.str();
}

}  // namespace seedling::bench
