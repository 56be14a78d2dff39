#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "aiive/protocol.hpp"
#include "aiive/websocket.hpp"

namespace aiive {

// Blocking client for the framed or WebSocket transport. Used by tests and
// tools; the browser UI speaks the same WebSocket variant.
class Client {
public:
    enum class Transport { Raw, WebSocket };

    static Client connect(const std::string& host, std::uint16_t port, Transport transport = Transport::Raw,
                          std::chrono::milliseconds timeout = std::chrono::seconds(5));

    Client(Client&& other) noexcept;
    Client& operator=(Client&& other) noexcept;
    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;
    ~Client();

    void send(const protocol::ClientMessage& message);
    void send_text(std::string_view body);
    // Unframed bytes straight onto the socket.
    void send_raw(std::string_view bytes);

    // Next server message, or nullopt on timeout. IoError once the server has
    // closed the connection and nothing is buffered.
    std::optional<protocol::ServerMessage> receive(std::chrono::milliseconds timeout);

    // Receives until a message of type T arrives; nullopt on timeout.
    template <class T>
    std::optional<T> wait_for(std::chrono::milliseconds timeout)
    {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (true) {
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0)
                return std::nullopt;
            auto m = receive(left);
            if (m)
                if (const T* p = std::get_if<T>(&m->body))
                    return *p;
        }
    }

    // True once the peer closed the stream.
    bool closed() const { return closed_; }
    Transport transport() const { return transport_; }
    void close();

private:
    Client(int fd, Transport transport);
    bool fill(std::chrono::milliseconds timeout);
    std::optional<std::string> next_body();

    int fd_ = -1;
    Transport transport_ = Transport::Raw;
    // Server messages may exceed the inbound limit (epoch weights).
    static constexpr std::size_t kMaxServerMessage = std::size_t{256} << 20;
    protocol::FrameDecoder raw_{kMaxServerMessage};
    ws::FrameDecoder ws_{false, kMaxServerMessage};
    std::uint64_t mask_state_ = 0x9e3779b97f4a7c15ULL;
    bool closed_ = false;
};

} // namespace aiive
