#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace flc::fed {

inline constexpr int kWireVersion = 1;

/// One protocol message. `type` is "global" (server -> client), "params"
/// (client -> server), "error" (client -> server) or "stop".
struct WireMessage {
  std::string type;
  std::size_t round = 0;
  std::size_t client_id = 0;
  std::vector<double> params;
  double loss = 0.0;
  std::string error;
};

/// 4-byte little-endian payload length, then the JSON payload.
std::string encode_frame(const WireMessage& msg);

/// Parses a complete frame. Throws ProtocolError on bad length, version or
/// shape (including a param_len that disagrees with the params array).
WireMessage decode_frame(std::string_view frame);

/// One end of a bidirectional, ordered frame channel.
class Link {
 public:
  virtual ~Link() = default;
  virtual void send(const std::string& frame) = 0;
  /// Blocks for the next complete frame.
  virtual std::string receive() = 0;
};

struct LinkPair {
  std::unique_ptr<Link> server_end;
  std::unique_ptr<Link> client_end;
};

/// Queue-backed channel inside one process.
LinkPair make_in_process_link();

/// Connected local stream sockets (socketpair).
LinkPair make_socket_link();

}  // namespace flc::fed
