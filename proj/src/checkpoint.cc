#include <fstream>
#include <iterator>
#include <limits>

#include "seedling/bytes.h"
#include "seedling/nn.h"

namespace seedling::nn {
namespace {
constexpr std::string_view kMagic = "SEEDLING";
}

std::vector<std::uint8_t> encode_checkpoint(const ParamSnapshot& params) {
  if (params.version > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError("snapshot version does not fit the checkpoint format");
  }
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.bytes(kMagic);
  w.u32(static_cast<std::uint32_t>(params.version));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const std::string& name = params.names.at(i);
    const Tensor& t = params.tensors[i];
    if (name.size() > std::numeric_limits<std::uint16_t>::max() || t.rank() > 255) {
      throw ConfigError("tensor " + name + " cannot be checkpointed");
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(t.data);
  }
  return out;
}

ParamSnapshot decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.str(kMagic.size());
  if (!magic || *magic != kMagic) throw ConfigError("not a SEEDLING checkpoint");
  auto version = r.u32();
  if (!version) throw ConfigError("truncated checkpoint header");
  ParamSnapshot p;
  p.version = *version;
  while (r.remaining() > 0) {
    auto len = r.u16();
    std::optional<std::string> name = len ? r.str(*len) : std::nullopt;
    auto rank = r.u8();
    if (!name || !rank) throw ConfigError("truncated checkpoint tensor header");
    std::vector<std::size_t> shape;
    for (int d = 0; d < *rank; ++d) {
      auto dim = r.u32();
      if (!dim) throw ConfigError("truncated checkpoint tensor shape");
      shape.push_back(*dim);
    }
    const std::size_t n = Tensor::element_count(shape);
    if (r.remaining() / 4 < n) throw ConfigError("truncated checkpoint tensor data");
    std::vector<float> data(n);
    for (auto& v : data) v = *r.f32();
    p.names.push_back(std::move(*name));
    p.tensors.emplace_back(std::move(shape), std::move(data));
  }
  return p;
}

void save_checkpoint(const std::string& path, const ParamSnapshot& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open checkpoint for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError("failed writing checkpoint: " + path);
}

ParamSnapshot load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace seedling::nn
