#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "aiive/session.hpp"

namespace aiive::protocol {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = std::size_t{1} << 20;

// Malformed, unknown or ill-typed message. The connection stays open.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct HelloAck {
    friend bool operator==(const HelloAck&, const HelloAck&) = default;
};

struct Hello {
    int protocol_version = kProtocolVersion;
    LayerSizes layer_sizes{};
    Hyperparams hyperparams;
    SessionState state = SessionState::Paused;
    SonificationConfig sonification;
    friend bool operator==(const Hello&, const Hello&) = default;
};

using ClientBody = std::variant<HelloAck, cmd::Pause, cmd::Resume, cmd::SetHyperparams, cmd::AddNeuron,
                                cmd::RemoveNeuron, cmd::DragNode, cmd::ReleaseNode,
                                cmd::SetSonification, cmd::EvaluateNow>;

using ServerBody = std::variant<Hello, ev::StateChanged, ev::EpochCompleted, ev::LayoutFrame,
                                ev::HyperparamsChanged, ev::StructureChanged, ev::EvalResult,
                                ev::Audio, ev::Error>;

struct ClientMessage {
    std::optional<std::uint64_t> seq;
    ClientBody body;
    friend bool operator==(const ClientMessage&, const ClientMessage&) = default;
};

struct ServerMessage {
    std::uint64_t seq = 0;
    ServerBody body;
    friend bool operator==(const ServerMessage&, const ServerMessage&) = default;
};

std::string_view type_tag(const ClientBody& body);
std::string_view type_tag(const ServerBody& body);

// Every event has a wire form.
ServerBody to_server_body(const Event& event);
// Shutdown has no wire form.
std::optional<ClientBody> to_client_body(const Command& command);
// HelloAck carries no command.
std::optional<Command> to_command(const ClientBody& body);

// UTF-8 JSON objects {"type": tag, "seq": n, ...fields}. Encoding throws
// InvalidArgument on non-finite numbers; decoding throws ProtocolError.
std::string encode(const ClientMessage& message);
std::string encode(const ServerMessage& message);
ClientMessage decode_client(std::string_view text);
ServerMessage decode_server(std::string_view text);

// Serialized server body without "seq", so a broadcast can be encoded once and
// stamped per connection.
class EncodedBody {
public:
    explicit EncodedBody(const ServerBody& body);
    std::string with_seq(std::uint64_t seq) const;
    std::string_view tag() const { return tag_; }

private:
    std::string tag_;
    std::string fields_; // "..." JSON members after type, may be empty
};

// Command script: one {"at_step": n, "cmd": {...client message...}} per line.
// Blank lines and lines starting with '#' are skipped. "shutdown" is allowed
// here even though it is not a wire message.
std::vector<ScriptEntry> parse_script(std::istream& in);
std::string encode_script_entry(const ScriptEntry& entry);

// 4-byte big-endian length prefix.
std::string encode_frame(std::string_view body);

class FrameDecoder {
public:
    struct Frame {
        enum class Kind {
            Body,     // complete frame
            Empty,    // zero-length frame: protocol error, stream continues
            Oversize, // length above the limit: the stream is dead
        };
        Kind kind = Kind::Body;
        std::string body;
    };

    explicit FrameDecoder(std::size_t max_bytes = kMaxFrameBytes) : max_bytes_(max_bytes) {}

    void feed(std::string_view bytes);
    std::optional<Frame> next();
    bool dead() const { return dead_; }
    std::size_t buffered() const { return buffer_.size() - pos_; }

private:
    std::size_t max_bytes_;
    std::string buffer_;
    std::size_t pos_ = 0;
    bool dead_ = false;
};

} // namespace aiive::protocol
