#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "seedling/error.h"

// Thin blocking stream sockets. Addresses are "host:port" for TCP or
// "unix:/path" for a Unix-domain socket.
namespace seedling::net {

class SocketError : public Error {
 public:
  using Error::Error;
};

struct Address {
  bool is_unix = false;
  std::string host;
  std::uint16_t port = 0;
  std::string path;

  std::string to_string() const;
};

// Throws ConfigError on a malformed address.
Address parse_address(const std::string& text);

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  // Returns bytes read, 0 on orderly close. Throws SocketError otherwise.
  std::size_t read_some(std::span<std::uint8_t> buf);
  // Like read_some, but returns nullopt if nothing arrives within timeout.
  std::optional<std::size_t> read_for(std::span<std::uint8_t> buf,
                                      std::chrono::milliseconds timeout);
  void write_all(std::span<const std::uint8_t> bytes);
  // Half-closes both directions so a blocked reader wakes up.
  void shutdown();
  // Sends FIN but keeps reading.
  void shutdown_write();
  void close();

 private:
  int fd_ = -1;
};

// Connects once; throws SocketError on failure.
Socket connect_to(const std::string& address);

class Listener {
 public:
  explicit Listener(const std::string& address);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  // Actual bound address (the chosen port when 0 was requested).
  std::string address() const { return bound_.to_string(); }
  // nullopt on timeout.
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  Address bound_;
};

}  // namespace seedling::net
