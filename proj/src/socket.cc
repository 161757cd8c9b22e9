#include "seedling/socket.h"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

namespace seedling::net {
namespace {

[[noreturn]] void fail(const std::string& what) {
  throw SocketError(what + ": " + std::strerror(errno));
}

sockaddr_un unix_addr(const std::string& path) {
  sockaddr_un sa{};
  sa.sun_family = AF_UNIX;
  if (path.size() >= sizeof(sa.sun_path)) {
    throw ConfigError("unix socket path too long: " + path);
  }
  std::memcpy(sa.sun_path, path.c_str(), path.size() + 1);
  return sa;
}

sockaddr_in tcp_addr(const Address& a) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(a.port);
  const std::string host = a.host == "localhost" ? "127.0.0.1" : a.host;
  if (inet_pton(AF_INET, host.c_str(), &sa.sin_addr) == 1) return sa;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw SocketError("cannot resolve host " + a.host);
  }
  sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return sa;
}

void set_nodelay(int fd) {
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

bool wait_readable(int fd, std::chrono::milliseconds timeout) {
  pollfd p{fd, POLLIN, 0};
  for (;;) {
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r > 0) return true;
    if (r == 0) return false;
    if (errno != EINTR) fail("poll");
  }
}

}  // namespace

std::string Address::to_string() const {
  if (is_unix) return "unix:" + path;
  return host + ":" + std::to_string(port);
}

Address parse_address(const std::string& text) {
  Address a;
  if (text.rfind("unix:", 0) == 0) {
    a.is_unix = true;
    a.path = text.substr(5);
    if (a.path.empty()) throw ConfigError("empty unix socket path");
    return a;
  }
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("address must be HOST:PORT or unix:PATH, got '" + text + "'");
  }
  a.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  unsigned long p = 0;
  try {
    std::size_t used = 0;
    p = std::stoul(port, &used);
    if (used != port.size()) throw std::invalid_argument("port");
  } catch (const std::exception&) {
    throw ConfigError("bad port in address '" + text + "'");
  }
  if (p > 65535) throw ConfigError("port out of range in '" + text + "'");
  a.port = static_cast<std::uint16_t>(p);
  return a;
}

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

std::size_t Socket::read_some(std::span<std::uint8_t> buf) {
  for (;;) {
    const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno == EINTR) continue;
    if (errno == ECONNRESET) return 0;
    fail("recv");
  }
}

std::optional<std::size_t> Socket::read_for(std::span<std::uint8_t> buf,
                                            std::chrono::milliseconds timeout) {
  if (!wait_readable(fd_, timeout)) return std::nullopt;
  return read_some(buf);
}

void Socket::write_all(std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n =
        ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("send");
    }
    off += static_cast<std::size_t>(n);
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::shutdown_write() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Socket connect_to(const std::string& address) {
  const Address a = parse_address(address);
  if (a.is_unix) {
    Socket s(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) fail("socket");
    const auto sa = unix_addr(a.path);
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) != 0) {
      fail("connect " + address);
    }
    return s;
  }
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) fail("socket");
  const auto sa = tcp_addr(a);
  if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) != 0) {
    fail("connect " + address);
  }
  set_nodelay(s.fd());
  return s;
}

Listener::Listener(const std::string& address) {
  bound_ = parse_address(address);
  if (bound_.is_unix) {
    fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) fail("socket");
    ::unlink(bound_.path.c_str());
    const auto sa = unix_addr(bound_.path);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) != 0) {
      const int saved = errno;
      close();
      errno = saved;
      fail("bind " + address);
    }
  } else {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) fail("socket");
    int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const auto sa = tcp_addr(bound_);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) != 0) {
      const int saved = errno;
      close();
      errno = saved;
      fail("bind " + address);
    }
    sockaddr_in actual{};
    socklen_t len = sizeof(actual);
    getsockname(fd_, reinterpret_cast<sockaddr*>(&actual), &len);
    bound_.port = ntohs(actual.sin_port);
  }
  if (::listen(fd_, 128) != 0) {
    const int saved = errno;
    close();
    errno = saved;
    fail("listen " + address);
  }
}

Listener::~Listener() { close(); }

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
  if (fd_ < 0) return std::nullopt;
  if (!wait_readable(fd_, timeout)) return std::nullopt;
  const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) {
    if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) {
      return std::nullopt;
    }
    fail("accept");
  }
  if (!bound_.is_unix) set_nodelay(fd);
  return Socket(fd);
}

void Listener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
    if (bound_.is_unix) ::unlink(bound_.path.c_str());
  }
}

}  // namespace seedling::net
