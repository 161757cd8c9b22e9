#include <type_traits>

#include "seedling/bytes.h"
#include "seedling/wire.h"

namespace seedling::wire {
namespace {

// Payload bytes following the type byte for the fixed-size messages.
constexpr std::size_t kHelloPayload = 8;
constexpr std::size_t kStepHeader = 13;
constexpr std::size_t kActionPayload = 8;

}  // namespace

MsgType type_of(const Message& m) {
  return std::visit(
      [](const auto& v) -> MsgType {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Hello>) return MsgType::kHello;
        if constexpr (std::is_same_v<T, StepRequest>) return MsgType::kStepRequest;
        if constexpr (std::is_same_v<T, ActionResponse>) return MsgType::kActionResponse;
        return MsgType::kError;
      },
      m);
}

void encode(const Message& m, std::vector<std::uint8_t>& out) {
  const std::size_t start = out.size();
  ByteWriter w(out);
  w.u32(0);  // patched below
  w.u8(static_cast<std::uint8_t>(type_of(m)));
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Hello>) {
          w.u32(v.actor_id);
          w.u32(v.num_envs);
        } else if constexpr (std::is_same_v<T, StepRequest>) {
          w.u32(v.env_id);
          w.f32(v.reward);
          w.u8(v.done);
          w.u32(static_cast<std::uint32_t>(v.obs.size()));
          w.f32s(v.obs);
        } else if constexpr (std::is_same_v<T, ActionResponse>) {
          w.u32(v.env_id);
          w.u32(v.action);
        } else {
          if (v.message.size() > 0xFFFF) {
            throw ProtocolError("error message longer than 65535 bytes");
          }
          w.u16(v.code);
          w.u16(static_cast<std::uint16_t>(v.message.size()));
          w.bytes(v.message);
        }
      },
      m);
  const std::size_t length = out.size() - start - 4;
  if (length > kMaxFrame) {
    out.resize(start);
    throw ProtocolError("frame exceeds 16 MiB");
  }
  for (int i = 0; i < 4; ++i) {
    out[start + i] = static_cast<std::uint8_t>(length >> (8 * i));
  }
}

std::vector<std::uint8_t> encode(const Message& m) {
  std::vector<std::uint8_t> out;
  encode(m, out);
  return out;
}

std::optional<Message> decode(std::span<const std::uint8_t> bytes,
                              std::size_t& consumed) {
  ByteReader header(bytes);
  auto length = header.u32();
  if (!length) return std::nullopt;
  if (*length > kMaxFrame) throw ProtocolError("frame exceeds 16 MiB");
  if (*length == 0) throw ProtocolError("empty frame");
  if (bytes.size() - 4 < *length) return std::nullopt;

  ByteReader r(bytes.subspan(4, *length));
  const auto type = *r.u8();
  const std::size_t payload = *length - 1;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) throw ProtocolError(std::string("malformed ") + what + " frame");
  };
  Message msg;
  switch (type) {
    case static_cast<std::uint8_t>(MsgType::kHello): {
      expect(payload == kHelloPayload, "Hello");
      Hello h;
      h.actor_id = *r.u32();
      h.num_envs = *r.u32();
      msg = h;
      break;
    }
    case static_cast<std::uint8_t>(MsgType::kStepRequest): {
      expect(payload >= kStepHeader, "StepRequest");
      StepRequest s;
      s.env_id = *r.u32();
      s.reward = *r.f32();
      s.done = *r.u8();
      const std::uint32_t count = *r.u32();
      expect(payload - kStepHeader == std::size_t{count} * 4, "StepRequest");
      s.obs.resize(count);
      for (auto& v : s.obs) v = *r.f32();
      msg = std::move(s);
      break;
    }
    case static_cast<std::uint8_t>(MsgType::kActionResponse): {
      expect(payload == kActionPayload, "ActionResponse");
      ActionResponse a;
      a.env_id = *r.u32();
      a.action = *r.u32();
      msg = a;
      break;
    }
    case static_cast<std::uint8_t>(MsgType::kError): {
      expect(payload >= 4, "Error");
      ErrorMsg e;
      e.code = *r.u16();
      const std::uint16_t n = *r.u16();
      expect(payload - 4 == n, "Error");
      e.message = *r.str(n);
      msg = std::move(e);
      break;
    }
    default:
      throw ProtocolError("unknown message type " + std::to_string(type));
  }
  consumed = 4 + *length;
  return msg;
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
  if (start_ > 0 && start_ * 2 >= buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(start_));
    start_ = 0;
  }
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameDecoder::next() {
  std::size_t consumed = 0;
  auto msg = decode(std::span(buf_).subspan(start_), consumed);
  if (msg) {
    start_ += consumed;
    if (start_ == buf_.size()) {
      buf_.clear();
      start_ = 0;
    }
  }
  return msg;
}

}  // namespace seedling::wire
