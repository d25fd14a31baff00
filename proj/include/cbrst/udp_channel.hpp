#pragma once

// Multipath-over-ECMP emulation with UDP port pools: path i maps to the
// (local_port[i % L], remote_port[i / L]) pair, so symbols sprayed on
// different paths carry different source/destination port combinations.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <system_error>
#include <thread>

#include "cbrst/transport.hpp"

namespace cbrst {

class UdpChannel : public MultipathChannel {
 public:
  UdpChannel(const std::string& local_ip, std::vector<std::uint16_t> local_ports,
             const std::string& remote_ip, std::vector<std::uint16_t> remote_ports)
      : local_ports_(std::move(local_ports)), remote_ports_(std::move(remote_ports)) {
    if (local_ports_.empty() || remote_ports_.empty())
      throw std::invalid_argument("UdpChannel: empty port pool");
    remote_ip_ = ip_to_u32(remote_ip);
    for (std::uint16_t port : local_ports_) {
      int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
      if (fd < 0) throw std::system_error(errno, std::generic_category(), "socket");
      int one = 1;
      ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_addr.s_addr = htonl(ip_to_u32(local_ip));
      addr.sin_port = htons(port);
      if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        int e = errno;
        ::close(fd);
        throw std::system_error(e, std::generic_category(), "bind");
      }
      ::fcntl(fd, F_SETFL, O_NONBLOCK);
      int buf = 1 << 20;
      ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &buf, sizeof buf);
      fds_.push_back(fd);
    }
    epoch_ = std::chrono::steady_clock::now();
  }

  UdpChannel(const UdpChannel&) = delete;
  UdpChannel& operator=(const UdpChannel&) = delete;

  ~UdpChannel() override {
    for (int fd : fds_) ::close(fd);
  }

  std::uint32_t path_count() const override {
    return static_cast<std::uint32_t>(local_ports_.size() * remote_ports_.size());
  }

  void send(std::uint32_t path, std::span<const std::uint8_t> bytes,
            std::uint64_t peer) override {
    std::size_t li = path % fds_.size();
    sockaddr_in to{};
    to.sin_family = AF_INET;
    if (peer != 0) {
      to.sin_addr.s_addr = htonl(static_cast<std::uint32_t>(peer >> 16));
      to.sin_port = htons(static_cast<std::uint16_t>(peer & 0xffff));
    } else {
      to.sin_addr.s_addr = htonl(remote_ip_);
      to.sin_port = htons(remote_ports_[(path / fds_.size()) % remote_ports_.size()]);
    }
    // Best-effort: a full socket buffer is just loss.
    (void)::sendto(fds_[li], bytes.data(), bytes.size(), 0,
                   reinterpret_cast<sockaddr*>(&to), sizeof to);
  }

  std::optional<Datagram> receive() override {
    std::uint8_t buf[65536];
    for (std::size_t i = 0; i < fds_.size(); ++i) {
      std::size_t s = (cursor_ + i) % fds_.size();
      sockaddr_in from{};
      socklen_t fl = sizeof from;
      ssize_t r = ::recvfrom(fds_[s], buf, sizeof buf, 0,
                             reinterpret_cast<sockaddr*>(&from), &fl);
      if (r <= 0) continue;
      cursor_ = s;  // keep draining the hot socket first
      Datagram d;
      d.bytes.assign(buf, buf + r);
      d.path = static_cast<std::uint32_t>(s);
      d.peer = (static_cast<std::uint64_t>(ntohl(from.sin_addr.s_addr)) << 16) |
               ntohs(from.sin_port);
      d.source = ntohl(from.sin_addr.s_addr);
      return d;
    }
    return std::nullopt;
  }

  Nanos now() const override {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now() - epoch_)
        .count();
  }

  // Hybrid sleep: coarse sleep to within 150us of the target, then spin, so
  // round pacing holds at microsecond scale.
  void wait_until(Nanos t) override {
    constexpr Nanos kSpin = 150 * kMicro;
    Nanos remaining = t - now();
    if (remaining > kSpin)
      std::this_thread::sleep_for(std::chrono::nanoseconds(remaining - kSpin));
    while (now() < t) {
    }
  }

 private:
  static std::uint32_t ip_to_u32(const std::string& ip) {
    in_addr a{};
    if (::inet_pton(AF_INET, ip.c_str(), &a) != 1)
      throw std::invalid_argument("bad IPv4 address: " + ip);
    return ntohl(a.s_addr);
  }

  std::vector<std::uint16_t> local_ports_, remote_ports_;
  std::uint32_t remote_ip_ = 0;
  std::vector<int> fds_;
  std::size_t cursor_ = 0;
  std::chrono::steady_clock::time_point epoch_;
};

}  // namespace cbrst
