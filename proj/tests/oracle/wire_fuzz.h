#pragma once

#include <atomic>
#include <bit>
#include <map>
#include <random>
#include <thread>
#include <vector>

#include "seedling/wire.h"

namespace oracle {

// Random message with arbitrary float bit patterns (NaN payloads included).
inline seedling::wire::Message random_message(std::mt19937_64& rng) {
  using namespace seedling::wire;
  std::uniform_int_distribution<std::uint32_t> u32;
  auto any_float = [&] { return std::bit_cast<float>(u32(rng)); };
  switch (u32(rng) % 4) {
    case 0: {
      ErrorMsg e;
      e.code = static_cast<std::uint16_t>(u32(rng));
      const std::size_t n = u32(rng) % 40;
      for (std::size_t i = 0; i < n; ++i) e.message.push_back(static_cast<char>(u32(rng)));
      return e;
    }
    case 1:
      return Hello{u32(rng), u32(rng)};
    case 2: {
      StepRequest r;
      r.env_id = u32(rng);
      r.reward = any_float();
      r.done = static_cast<std::uint8_t>(u32(rng) % 2);
      r.obs.resize(u32(rng) % 120);
      for (float& v : r.obs) v = any_float();
      return r;
    }
    default:
      return ActionResponse{u32(rng), u32(rng)};
  }
}

struct FuzzResult {
  std::size_t messages = 0;
  std::size_t mismatches = 0;
  bool streaming_equal = true;
};

// Encodes `count` random messages; each must decode to a message that
// re-encodes to the same bytes. The whole stream is then fed one byte at a
// time and must yield the same sequence; only the first `streamed` messages
// take part in that second pass.
inline FuzzResult fuzz_roundtrip(std::size_t count, std::uint64_t seed,
                                 std::size_t streamed = 3000) {
  using namespace seedling::wire;
  std::mt19937_64 rng(seed);
  FuzzResult res;
  std::vector<std::uint8_t> stream;
  std::vector<std::vector<std::uint8_t>> frames;
  for (std::size_t i = 0; i < count; ++i) {
    const Message m = random_message(rng);
    const auto bytes = encode(m);
    std::size_t used = 0;
    const auto back = decode(bytes, used);
    if (!back || used != bytes.size() || encode(*back) != bytes ||
        type_of(*back) != type_of(m)) {
      ++res.mismatches;
    }
    ++res.messages;
    if (i < streamed) {
      stream.insert(stream.end(), bytes.begin(), bytes.end());
      frames.push_back(bytes);
    }
  }
  FrameDecoder dec;
  std::size_t k = 0;
  for (std::uint8_t b : stream) {
    dec.feed(std::span(&b, 1));
    while (auto m = dec.next()) {
      if (k >= frames.size() || encode(*m) != frames[k]) res.streaming_equal = false;
      ++k;
    }
  }
  if (k != frames.size() || dec.buffered() != 0) res.streaming_equal = false;
  return res;
}

struct BatcherLoad {
  std::size_t submitted = 0;
  std::size_t answered = 0;
  std::size_t duplicates = 0;
  std::size_t order_violations = 0;
  std::size_t max_batch_seen = 0;
};

// `conns` producer threads each submit `per_conn` requests over `envs` env
// ids, waiting for an answer before reusing an env id. One consumer serves
// batches. Every ticket must be answered once, and each connection's
// requests must come out in submission order.
inline BatcherLoad batcher_load(std::size_t conns, std::size_t envs,
                                std::size_t per_conn, std::size_t max_batch) {
  using namespace seedling::wire;
  Batcher batcher(max_batch, std::chrono::microseconds(200));
  BatcherLoad out;
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::pair<std::uint64_t, std::uint32_t>, bool> busy;
  std::map<std::uint64_t, std::size_t> answered_tickets;
  std::map<std::uint64_t, std::uint64_t> last_seq;  // conn -> last sequence no.
  for (std::size_t c = 0; c < conns; ++c) batcher.open_connection(c);

  std::vector<std::thread> producers;
  std::atomic<std::size_t> submitted{0};
  for (std::size_t c = 0; c < conns; ++c) {
    producers.emplace_back([&, c] {
      for (std::size_t i = 0; i < per_conn; ++i) {
        const auto env = static_cast<std::uint32_t>(i % envs);
        {
          std::unique_lock lock(mu);
          cv.wait(lock, [&] { return !busy[{c, env}]; });
          busy[{c, env}] = true;
        }
        StepRequest r;
        r.env_id = env;
        // Sequence number rides in the reward.
        r.reward = static_cast<float>(i);
        batcher.submit(c, std::move(r));
        ++submitted;
      }
    });
  }
  const std::size_t total = conns * per_conn;
  std::size_t served = 0;
  while (served < total) {
    auto b = batcher.poll(std::chrono::milliseconds(100));
    if (!b) continue;
    out.max_batch_seen = std::max(out.max_batch_seen, b->entries.size());
    for (const auto& e : b->entries) {
      std::lock_guard lock(mu);
      if (answered_tickets[e.ticket]++ > 0) ++out.duplicates;
      const auto seq = static_cast<std::uint64_t>(e.request.reward);
      auto it = last_seq.find(e.conn);
      if (it != last_seq.end() && seq <= it->second) ++out.order_violations;
      last_seq[e.conn] = seq;
      batcher.complete(e.conn, e.request.env_id);
      busy[{e.conn, e.request.env_id}] = false;
      ++served;
    }
    cv.notify_all();
  }
  for (auto& t : producers) t.join();
  out.submitted = submitted.load();
  out.answered = answered_tickets.size();
  batcher.shutdown();
  return out;
}

}  // namespace oracle
