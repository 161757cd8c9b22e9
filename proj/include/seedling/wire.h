#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "seedling/error.h"

// Wire format v1. Every frame is: u32 LE length (type byte + payload), u8 type,
// payload. All integers and floats are little-endian.
namespace seedling::wire {

inline constexpr std::size_t kMaxFrame = 16u << 20;

enum class MsgType : std::uint8_t {
  kError = 0x00,
  kHello = 0x01,
  kStepRequest = 0x02,
  kActionResponse = 0x03,
};

// actor -> learner, once per connection.
struct Hello {
  std::uint32_t actor_id = 0;
  std::uint32_t num_envs = 0;
  bool operator==(const Hello&) const = default;
};

// actor -> learner. `reward` and `done` describe the transition that led to
// `obs`; done = 1 with reward 0 also opens the very first episode.
struct StepRequest {
  std::uint32_t env_id = 0;
  float reward = 0.0f;
  std::uint8_t done = 0;
  std::vector<float> obs;
  bool operator==(const StepRequest&) const = default;
};

// learner -> actor.
struct ActionResponse {
  std::uint32_t env_id = 0;
  std::uint32_t action = 0;
  bool operator==(const ActionResponse&) const = default;
};

enum ErrorCode : std::uint16_t {
  kErrProtocol = 1,
  kErrNotReady = 2,
  kErrShutdown = 3,
  kErrInternal = 4,
};

struct ErrorMsg {
  std::uint16_t code = 0;
  std::string message;
  bool operator==(const ErrorMsg&) const = default;
};

using Message = std::variant<ErrorMsg, Hello, StepRequest, ActionResponse>;

MsgType type_of(const Message& m);

// Appends one frame to `out`.
void encode(const Message& m, std::vector<std::uint8_t>& out);
std::vector<std::uint8_t> encode(const Message& m);

// Decodes the frame at the front of `bytes`. Returns nullopt when more bytes
// are needed; otherwise sets `consumed` to the frame size. Throws
// ProtocolError on an oversized frame, unknown type or malformed payload.
std::optional<Message> decode(std::span<const std::uint8_t> bytes,
                              std::size_t& consumed);

// Reassembles frames from arbitrarily fragmented input.
class FrameDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  std::optional<Message> next();
  std::size_t buffered() const { return buf_.size() - start_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t start_ = 0;
};

using Clock = std::chrono::steady_clock;

struct BatchEntry {
  std::uint64_t ticket = 0;
  std::uint64_t conn = 0;
  StepRequest request;
  Clock::time_point submitted;
};

struct InferenceBatch {
  std::vector<BatchEntry> entries;
  Clock::time_point formed_at;
  bool deadline_triggered = false;
};

struct BatcherStats {
  std::uint64_t submitted = 0;
  std::uint64_t batches = 0;
  std::uint64_t deadline_batches = 0;
  std::uint64_t dropped = 0;
  std::vector<std::uint64_t> size_histogram;  // index = batch size
};

// Coalesces inference requests from many connections. A batch is released
// once max_batch requests are pending or the oldest pending request has
// waited max_wait. Each (connection, env) pair may have at most one request
// outstanding between submit() and complete().
class Batcher {
 public:
  Batcher(std::size_t max_batch, std::chrono::microseconds max_wait);

  void open_connection(std::uint64_t conn);
  // Drops pending requests of `conn`; later submissions from it are dropped.
  void close_connection(std::uint64_t conn);

  // Returns the ticket, or nullopt if the connection is closed (the request
  // is dropped). Throws ProtocolError on a duplicate in-flight request.
  std::optional<std::uint64_t> submit(std::uint64_t conn, StepRequest request);

  // Waits up to `timeout` for a batch. nullopt on timeout or shutdown.
  std::optional<InferenceBatch> poll(std::chrono::microseconds timeout);

  // Marks the (conn, env) request as answered.
  void complete(std::uint64_t conn, std::uint32_t env_id);

  void shutdown();
  std::size_t pending() const;
  BatcherStats stats() const;
  std::size_t max_batch() const { return max_batch_; }

 private:
  const std::size_t max_batch_;
  const std::chrono::microseconds max_wait_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<BatchEntry> pending_;
  std::set<std::pair<std::uint64_t, std::uint32_t>> in_flight_;
  std::set<std::uint64_t> closed_;
  std::uint64_t next_ticket_ = 0;
  bool shutdown_ = false;
  BatcherStats stats_;
};

}  // namespace seedling::wire
