#include "flc/transport.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <mutex>

#include <json.hpp>

#include "flc/errors.hpp"

namespace flc::fed {

namespace {

constexpr std::size_t kHeaderBytes = 4;

std::uint32_t read_length(std::string_view header) {
  std::uint32_t len = 0;
  for (std::size_t b = 0; b < kHeaderBytes; ++b) {
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(header[b])) << (8 * b);
  }
  return len;
}

struct Mailbox {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<std::string> frames;

  void push(std::string frame) {
    {
      std::lock_guard lock(mutex);
      frames.push_back(std::move(frame));
    }
    ready.notify_one();
  }

  std::string pop() {
    std::unique_lock lock(mutex);
    ready.wait(lock, [&] { return !frames.empty(); });
    std::string f = std::move(frames.front());
    frames.pop_front();
    return f;
  }
};

class QueueLink final : public Link {
 public:
  QueueLink(std::shared_ptr<Mailbox> inbox, std::shared_ptr<Mailbox> outbox)
      : inbox_(std::move(inbox)), outbox_(std::move(outbox)) {}

  void send(const std::string& frame) override { outbox_->push(frame); }
  std::string receive() override { return inbox_->pop(); }

 private:
  std::shared_ptr<Mailbox> inbox_;
  std::shared_ptr<Mailbox> outbox_;
};

class SocketLink final : public Link {
 public:
  explicit SocketLink(int fd) : fd_(fd) {}
  ~SocketLink() override { ::close(fd_); }
  SocketLink(const SocketLink&) = delete;
  SocketLink& operator=(const SocketLink&) = delete;

  void send(const std::string& frame) override {
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const auto n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        raise(ErrorKind::ProtocolError, std::string("socket send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string receive() override {
    std::string frame = read_exact(kHeaderBytes);
    frame += read_exact(read_length(frame));
    return frame;
  }

 private:
  std::string read_exact(std::size_t count) {
    std::string buf(count, '\0');
    std::size_t got = 0;
    while (got < count) {
      const auto n = ::recv(fd_, buf.data() + got, count - got, 0);
      if (n == 0) raise(ErrorKind::ProtocolError, "socket closed mid-frame");
      if (n < 0) {
        if (errno == EINTR) continue;
        raise(ErrorKind::ProtocolError, std::string("socket recv failed: ") + std::strerror(errno));
      }
      got += static_cast<std::size_t>(n);
    }
    return buf;
  }

  int fd_;
};

}  // namespace

std::string encode_frame(const WireMessage& msg) {
  nlohmann::json j = {{"version", kWireVersion},
                      {"type", msg.type},
                      {"round", msg.round},
                      {"client_id", msg.client_id},
                      {"param_len", msg.params.size()},
                      {"params", msg.params},
                      {"loss", msg.loss}};
  if (!msg.error.empty()) j["error"] = msg.error;
  const std::string payload = j.dump();
  if (payload.size() > 0xffffffffu) raise(ErrorKind::ProtocolError, "frame too large");
  const auto len = static_cast<std::uint32_t>(payload.size());
  std::string frame(kHeaderBytes, '\0');
  for (std::size_t b = 0; b < kHeaderBytes; ++b) {
    frame[b] = static_cast<char>((len >> (8 * b)) & 0xffu);
  }
  frame += payload;
  return frame;
}

WireMessage decode_frame(std::string_view frame) {
  if (frame.size() < kHeaderBytes) raise(ErrorKind::ProtocolError, "frame shorter than header");
  const std::uint32_t len = read_length(frame);
  if (frame.size() - kHeaderBytes != len) {
    raise(ErrorKind::ProtocolError, "frame length prefix does not match payload");
  }
  try {
    const auto j = nlohmann::json::parse(frame.substr(kHeaderBytes));
    if (j.at("version").get<int>() != kWireVersion) {
      raise(ErrorKind::ProtocolError, "unsupported wire version");
    }
    WireMessage msg;
    msg.type = j.at("type").get<std::string>();
    msg.round = j.at("round").get<std::size_t>();
    msg.client_id = j.at("client_id").get<std::size_t>();
    msg.params = j.at("params").get<std::vector<double>>();
    msg.loss = j.value("loss", 0.0);
    msg.error = j.value("error", std::string{});
    if (j.at("param_len").get<std::size_t>() != msg.params.size()) {
      raise(ErrorKind::ProtocolError, "param_len disagrees with params");
    }
    return msg;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::ProtocolError, std::string("malformed frame payload: ") + e.what());
  }
}

LinkPair make_in_process_link() {
  auto to_server = std::make_shared<Mailbox>();
  auto to_client = std::make_shared<Mailbox>();
  return {std::make_unique<QueueLink>(to_server, to_client),
          std::make_unique<QueueLink>(to_client, to_server)};
}

LinkPair make_socket_link() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    raise(ErrorKind::ProtocolError, std::string("socketpair failed: ") + std::strerror(errno));
  }
  return {std::make_unique<SocketLink>(fds[0]), std::make_unique<SocketLink>(fds[1])};
}

}  // namespace flc::fed
