#include "seedling/actor.h"

#include <thread>

#include "json.hpp"

#include "seedling/error.h"
#include "seedling/socket.h"
#include "seedling/wire.h"

namespace seedling::actor {
namespace {

using Clock = std::chrono::steady_clock;

struct EnvState {
  std::unique_ptr<envs::Environment> env;
  wire::StepRequest next;  // request to send
  bool outstanding = false;
  Clock::time_point sent_at;
  double episode_return = 0.0;
};

enum class Outcome { kFinished, kShutdown, kDisconnected };

}  // namespace

void ActorConfig::validate() const {
  if (num_envs < 1) throw ConfigError("num_envs must be >= 1");
  env.validate();
  if (backoff_base.count() <= 0 || backoff_cap < backoff_base) {
    throw ConfigError("bad reconnect backoff");
  }
  if (duration_s < 0 || warmup_s < 0) throw ConfigError("negative duration");
  if (duration_s > 0 && warmup_s >= duration_s) {
    throw ConfigError("duration must exceed the warmup");
  }
}

std::uint64_t env_seed(std::uint64_t base, std::uint32_t actor_id,
                       std::uint32_t env_id) {
  std::seed_seq seq{base, static_cast<std::uint64_t>(actor_id),
                    static_cast<std::uint64_t>(env_id), std::uint64_t{0xe7}};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::string to_json(const ActorStats& s) {
  nlohmann::json j;
  j["requests"] = s.requests;
  j["responses"] = s.responses;
  j["episodes"] = s.episodes;
  j["mean_return"] = s.mean_return;
  j["connects"] = s.connects;
  j["elapsed_s"] = s.elapsed_s;
  j["fps"] = s.fps;
  j["latency_ms"] = {{"p50", s.latency_ms.p50},
                     {"p95", s.latency_ms.p95},
                     {"p99", s.latency_ms.p99},
                     {"mean", s.latency_ms.mean},
                     {"count", s.latency_ms.count}};
  j["exit_reason"] = s.exit_reason;
  return j.dump();
}

ActorStats run_actor(const ActorConfig& cfg) {
  cfg.validate();
  ActorStats stats;
  const auto t0 = Clock::now();
  const auto warm_at = t0 + std::chrono::duration_cast<Clock::duration>(
                                std::chrono::duration<double>(cfg.warmup_s));
  const bool timed = cfg.duration_s > 0;
  const auto end_at = t0 + std::chrono::duration_cast<Clock::duration>(
                               std::chrono::duration<double>(cfg.duration_s));
  std::vector<double> latencies;
  std::uint64_t warm_responses = 0;
  Clock::time_point warm_start{};
  bool warm_started = false;
  double return_sum = 0.0;

  std::vector<EnvState> envs(cfg.num_envs);
  for (std::uint32_t e = 0; e < cfg.num_envs; ++e) {
    envs::EnvSpec spec = cfg.env;
    spec.seed = env_seed(cfg.seed, cfg.actor_id, e);
    envs[e].env = envs::make_env(spec);
  }

  auto cancelled = [&] {
    return (cfg.cancel && cfg.cancel->load()) || (timed && Clock::now() >= end_at);
  };
  auto budget_left = [&] {
    return cfg.frame_budget == 0 || stats.requests < cfg.frame_budget;
  };

  auto backoff = cfg.backoff_base;
  auto last_connected = Clock::now();
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> buf(1 << 16);

  // After a failed write the learner may still have left a shutdown notice
  // in the receive buffer.
  auto drain = [&](net::Socket& sock, wire::FrameDecoder& decoder) {
    try {
      for (;;) {
        while (auto msg = decoder.next()) {
          auto* err = std::get_if<wire::ErrorMsg>(&*msg);
          if (err && err->code == wire::kErrShutdown) return Outcome::kShutdown;
        }
        const auto n = sock.read_for(buf, std::chrono::milliseconds(100));
        if (!n || *n == 0) return Outcome::kDisconnected;
        decoder.feed({buf.data(), *n});
      }
    } catch (const Error&) {
    }
    return Outcome::kDisconnected;
  };

  auto session = [&](net::Socket& sock) -> Outcome {
    out.clear();
    wire::encode(wire::Hello{cfg.actor_id, cfg.num_envs}, out);
    for (std::uint32_t e = 0; e < cfg.num_envs; ++e) {
      auto& s = envs[e];
      s.outstanding = false;
      s.episode_return = 0.0;
      s.next.env_id = e;
      s.next.obs = s.env->reset();
      s.next.reward = 0.0f;
      s.next.done = 1;
    }
    auto queue_request = [&](EnvState& s) {
      if (!budget_left() || cancelled()) return;
      wire::encode(s.next, out);
      s.outstanding = true;
      s.sent_at = Clock::now();
      ++stats.requests;
    };
    for (auto& s : envs) queue_request(s);
    sock.write_all(out);

    wire::FrameDecoder decoder;
    for (;;) {
      std::size_t outstanding = 0;
      for (const auto& s : envs) outstanding += s.outstanding ? 1 : 0;
      if (outstanding == 0) return Outcome::kFinished;
      const auto n = sock.read_for(buf, std::chrono::milliseconds(100));
      if (!n) {
        if (cfg.cancel && cfg.cancel->load()) return Outcome::kFinished;
        continue;
      }
      if (*n == 0) return Outcome::kDisconnected;
      decoder.feed({buf.data(), *n});
      out.clear();
      while (auto msg = decoder.next()) {
        if (auto* err = std::get_if<wire::ErrorMsg>(&*msg)) {
          if (err->code == wire::kErrShutdown) return Outcome::kShutdown;
          if (err->code == wire::kErrProtocol) {
            throw ProtocolError("learner rejected traffic: " + err->message);
          }
          return Outcome::kDisconnected;
        }
        auto* resp = std::get_if<wire::ActionResponse>(&*msg);
        if (!resp || resp->env_id >= cfg.num_envs ||
            !envs[resp->env_id].outstanding) {
          throw ProtocolError("unexpected message from learner");
        }
        auto& s = envs[resp->env_id];
        s.outstanding = false;
        ++stats.responses;
        const auto now = Clock::now();
        if (now >= warm_at) {
          if (!warm_started) {
            warm_started = true;
            warm_start = now;
          }
          ++warm_responses;
          latencies.push_back(
              std::chrono::duration<double, std::milli>(now - s.sent_at).count());
        }
        if (cfg.record_transcript) {
          stats.transcript.push_back(
              {resp->env_id, s.next.obs, s.next.reward, s.next.done, resp->action});
        }
        if (!budget_left() || cancelled()) continue;
        envs::StepResult r = s.env->step(static_cast<int>(resp->action));
        s.episode_return += r.reward;
        s.next.reward = r.reward;
        if (r.done) {
          ++stats.episodes;
          return_sum += s.episode_return;
          s.episode_return = 0.0;
          s.next.obs = s.env->reset();
          s.next.done = 1;
        } else {
          s.next.obs = std::move(r.obs);
          s.next.done = 0;
        }
        queue_request(s);
      }
      if (!out.empty()) {
        try {
          sock.write_all(out);
        } catch (const net::SocketError&) {
          return drain(sock, decoder);
        }
      }
    }
  };

  for (;;) {
    if (cancelled() || !budget_left()) {
      stats.exit_reason = !budget_left() ? "frame budget" : "stopped";
      break;
    }
    net::Socket sock;
    try {
      sock = net::connect_to(cfg.learner);
    } catch (const net::SocketError&) {
      if (cfg.connect_give_up_s > 0 &&
          std::chrono::duration<double>(Clock::now() - last_connected).count() >
              cfg.connect_give_up_s) {
        stats.exit_reason = "learner unreachable";
        break;
      }
      std::this_thread::sleep_for(backoff);
      backoff = std::min(backoff * 2, cfg.backoff_cap);
      continue;
    }
    ++stats.connects;
    backoff = cfg.backoff_base;
    Outcome o;
    try {
      o = session(sock);
    } catch (const net::SocketError&) {
      o = Outcome::kDisconnected;
    }
    last_connected = Clock::now();
    if (o == Outcome::kShutdown) {
      stats.exit_reason = "learner shutdown";
      break;
    }
    if (o == Outcome::kFinished) {
      stats.exit_reason = !budget_left() ? "frame budget" : "stopped";
      break;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, cfg.backoff_cap);
  }

  const auto t1 = Clock::now();
  stats.elapsed_s = std::chrono::duration<double>(t1 - t0).count();
  if (warm_started) {
    const double span = std::chrono::duration<double>(t1 - warm_start).count();
    stats.fps = span > 0 ? static_cast<double>(warm_responses) / span : 0.0;
  }
  stats.latency_ms = summarize(latencies);
  stats.latency_samples = std::move(latencies);
  stats.mean_return =
      stats.episodes ? return_sum / static_cast<double>(stats.episodes) : 0.0;
  return stats;
}

}  // namespace seedling::actor
