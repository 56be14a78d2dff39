#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "aiive/protocol.hpp"

namespace aiive::ws {

inline constexpr std::size_t kMaxHeaderBytes = 16 * 1024;

struct HttpRequest {
    std::string method;
    std::string target;
    std::map<std::string, std::string> headers; // lower-cased names
    std::size_t consumed = 0;                   // bytes up to and including the blank line

    std::optional<std::string> header(const std::string& name) const;
    bool wants_websocket() const;
};

// nullopt while the header block is incomplete; ProtocolError when malformed
// or longer than kMaxHeaderBytes.
std::optional<HttpRequest> parse_http_request(std::string_view bytes);

// base64(SHA-1(key + RFC 6455 GUID))
std::string accept_key(std::string_view client_key);
std::string handshake_response(std::string_view client_key);

enum class Opcode : std::uint8_t {
    Continuation = 0x0,
    Text = 0x1,
    Binary = 0x2,
    Close = 0x8,
    Ping = 0x9,
    Pong = 0xA,
};

// Single final frame. Clients must pass a mask.
std::string encode_frame(Opcode op, std::string_view payload,
                         std::optional<std::array<std::uint8_t, 4>> mask = std::nullopt);
std::string close_frame(std::uint16_t code, std::string_view reason = {},
                        std::optional<std::array<std::uint8_t, 4>> mask = std::nullopt);

class FrameDecoder {
public:
    struct Message {
        enum class Kind {
            Text,
            Binary,
            Ping,
            Pong,
            Close,
            Violation, // protocol violation: send close 1002 and drop
            Oversize,  // message above the limit: close 1009 and drop
        };
        Kind kind = Kind::Text;
        std::string payload;
        std::uint16_t close_code = 0;
    };

    // Servers require masked frames, clients require unmasked ones.
    FrameDecoder(bool expect_masked, std::size_t max_message = protocol::kMaxFrameBytes)
        : expect_masked_(expect_masked), max_message_(max_message)
    {
    }

    void feed(std::string_view bytes);
    std::optional<Message> next();
    bool dead() const { return dead_; }

private:
    std::optional<Message> fail(Message::Kind kind);

    bool expect_masked_;
    std::size_t max_message_;
    std::string buffer_;
    std::size_t pos_ = 0;
    std::string partial_;
    std::optional<Opcode> partial_op_;
    bool dead_ = false;
};

} // namespace aiive::ws
