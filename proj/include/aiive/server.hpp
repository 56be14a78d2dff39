#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "aiive/protocol.hpp"
#include "aiive/session.hpp"

namespace aiive {

struct ServerConfig {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0; // 0 picks a free port
    // Plain HTTP GETs are answered from here (the browser UI); 404 otherwise.
    std::optional<std::filesystem::path> static_dir;
    // A connection that sends nothing within this window is treated as a raw
    // framed client and greeted; a first byte of 'G' means HTTP/WebSocket.
    std::chrono::milliseconds sniff_timeout{100};
    // Per-client queue limits. Layout and audio frames beyond the first limit
    // are dropped; a client whose backlog of other messages exceeds the second
    // is disconnected.
    std::size_t max_droppable = 64;
    std::size_t max_backlog = 4096;
};

struct ServerStats {
    std::size_t connections = 0;
    std::size_t protocol_errors = 0;
    std::size_t dropped_frames = 0;
};

// Bridges a Session to TCP clients. Commands are posted to the session
// queue; session events are broadcast to every connected client.
class Server {
public:
    Server(Session& session, ServerConfig config = {});
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and starts accepting. IoError when the address is unusable.
    void start();
    void stop();

    std::uint16_t port() const { return port_; }
    std::size_t client_count() const;
    ServerStats stats() const;

    class Connection;

private:
    void accept_loop();
    void on_event(const Event& event);
    void activate(const std::shared_ptr<Connection>& conn);
    void deactivate(const Connection* conn);
    void reap(bool all);

    friend class Connection;

    Session& session_;
    ServerConfig config_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::thread acceptor_;
    std::atomic<bool> running_{false};
    std::optional<std::size_t> subscription_;

    mutable std::mutex clients_mutex_; // guards active_ and the broadcast order
    std::vector<std::shared_ptr<Connection>> active_;

    std::mutex all_mutex_;
    std::vector<std::shared_ptr<Connection>> all_;

    std::atomic<std::size_t> connections_{0};
    std::atomic<std::size_t> protocol_errors_{0};
    std::atomic<std::size_t> dropped_{0};
};

} // namespace aiive
