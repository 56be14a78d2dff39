#include "aiive/server.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <fstream>
#include <sstream>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "aiive/error.hpp"
#include "aiive/websocket.hpp"

namespace aiive {

namespace {

bool send_all(int fd, std::string_view bytes)
{
    while (!bytes.empty()) {
        const ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            return false;
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

bool droppable(const Event& e)
{
    return std::holds_alternative<ev::LayoutFrame>(e) || std::holds_alternative<ev::Audio>(e);
}

std::string content_type(const std::filesystem::path& p)
{
    const std::string ext = p.extension().string();
    if (ext == ".html")
        return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs")
        return "text/javascript";
    if (ext == ".css")
        return "text/css";
    if (ext == ".json" || ext == ".map")
        return "application/json";
    if (ext == ".svg")
        return "image/svg+xml";
    if (ext == ".png")
        return "image/png";
    if (ext == ".wasm")
        return "application/wasm";
    return "application/octet-stream";
}

std::string http_response(int status, std::string_view reason, std::string_view type, std::string_view body)
{
    std::ostringstream os;
    os << "HTTP/1.1 " << status << ' ' << reason << "\r\n"
       << "Content-Type: " << type << "\r\n"
       << "Content-Length: " << body.size() << "\r\n"
       << "Connection: close\r\n\r\n"
       << body;
    return os.str();
}

} // namespace

class Server::Connection : public std::enable_shared_from_this<Connection> {
public:
    enum class Transport { Unknown, Raw, WebSocket };

    Connection(Server& server, int fd, std::string peer) : server_(server), fd_(fd), peer_(std::move(peer)) {}

    ~Connection()
    {
        if (fd_ >= 0)
            ::close(fd_);
    }

    void start()
    {
        auto self = shared_from_this();
        reader_ = std::thread([self] { self->read_loop(); });
        writer_ = std::thread([self] { self->write_loop(); });
    }

    void join()
    {
        if (reader_.joinable())
            reader_.join();
        if (writer_.joinable())
            writer_.join();
    }

    bool finished() const { return reader_done_ && writer_done_; }

    // Stamps a sequence number, frames for this transport and queues.
    void enqueue(const protocol::EncodedBody& body, bool can_drop)
    {
        std::lock_guard lock(mutex_);
        if (closing_)
            return;
        if (can_drop && droppable_queued_ >= server_.config_.max_droppable) {
            ++server_.dropped_;
            return;
        }
        if (queue_.size() >= server_.config_.max_backlog) {
            spdlog::warn("client {} is too slow, disconnecting", peer_);
            hard_close_locked();
            return;
        }
        const std::string text = body.with_seq(++seq_);
        queue_.push_back({frame(text), can_drop});
        if (can_drop)
            ++droppable_queued_;
        cv_.notify_one();
    }

    void send_error(std::string text)
    {
        ++server_.protocol_errors_;
        enqueue(protocol::EncodedBody(ev::Error{std::string(error_code::kProtocol), std::move(text)}), false);
    }

    // Queues raw bytes (handshake, HTTP replies, close frames).
    void enqueue_bytes(std::string bytes)
    {
        std::lock_guard lock(mutex_);
        if (closing_)
            return;
        queue_.push_back({std::move(bytes), false});
        cv_.notify_one();
    }

    // Flush what is queued, then close.
    void close_after_flush()
    {
        std::lock_guard lock(mutex_);
        flush_then_close_ = true;
        cv_.notify_one();
    }

    void hard_close()
    {
        std::lock_guard lock(mutex_);
        hard_close_locked();
    }

    Transport transport() const { return transport_; }
    const std::string& peer() const { return peer_; }

private:
    struct Outgoing {
        std::string bytes;
        bool droppable;
    };

    std::string frame(std::string_view text) const
    {
        if (transport_ == Transport::WebSocket)
            return ws::encode_frame(ws::Opcode::Text, text);
        return protocol::encode_frame(text);
    }

    void hard_close_locked()
    {
        if (closing_)
            return;
        closing_ = true;
        queue_.clear();
        ::shutdown(fd_, SHUT_RDWR);
        cv_.notify_one();
    }

    void write_loop()
    {
        while (true) {
            Outgoing out;
            {
                std::unique_lock lock(mutex_);
                cv_.wait(lock, [&] { return closing_ || flush_then_close_ || !queue_.empty(); });
                if (closing_)
                    break;
                if (queue_.empty()) {
                    // flush_then_close_ with nothing left
                    hard_close_locked();
                    break;
                }
                out = std::move(queue_.front());
                queue_.pop_front();
                if (out.droppable)
                    --droppable_queued_;
            }
            if (!send_all(fd_, out.bytes)) {
                hard_close();
                break;
            }
        }
        writer_done_ = true;
    }

    bool recv_some(std::string& into)
    {
        char buf[16384];
        while (true) {
            const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
            if (n > 0) {
                into.assign(buf, static_cast<std::size_t>(n));
                return true;
            }
            if (n < 0 && errno == EINTR)
                continue;
            return false;
        }
    }

    void read_loop()
    {
        try {
            run_reader();
        } catch (const std::exception& e) {
            spdlog::error("client {}: {}", peer_, e.what());
        }
        server_.deactivate(this);
        {
            // A pending flush-then-close is finished by the writer.
            std::lock_guard lock(mutex_);
            if (!flush_then_close_)
                hard_close_locked();
        }
        reader_done_ = true;
        spdlog::debug("client {} disconnected", peer_);
    }

    void run_reader()
    {
        pollfd pfd{fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(server_.config_.sniff_timeout.count()));
        char first = 0;
        if (ready > 0) {
            const ssize_t n = ::recv(fd_, &first, 1, MSG_PEEK);
            if (n <= 0)
                return;
        }
        if (ready > 0 && first == 'G')
            run_http();
        else
            run_raw();
    }

    void run_raw()
    {
        transport_ = Transport::Raw;
        server_.activate(shared_from_this());
        protocol::FrameDecoder decoder;
        std::string chunk;
        while (recv_some(chunk)) {
            decoder.feed(chunk);
            while (auto f = decoder.next()) {
                switch (f->kind) {
                case protocol::FrameDecoder::Frame::Kind::Body:
                    handle_text(f->body);
                    break;
                case protocol::FrameDecoder::Frame::Kind::Empty:
                    send_error("empty frame");
                    break;
                case protocol::FrameDecoder::Frame::Kind::Oversize:
                    ++server_.protocol_errors_;
                    spdlog::info("client {} sent an oversize frame, closing", peer_);
                    return;
                }
            }
        }
    }

    void run_http()
    {
        std::string buffered, chunk;
        std::optional<ws::HttpRequest> req;
        try {
            while (!req) {
                if (!recv_some(chunk))
                    return;
                buffered += chunk;
                req = ws::parse_http_request(buffered);
            }
        } catch (const protocol::ProtocolError& e) {
            ++server_.protocol_errors_;
            enqueue_bytes(http_response(400, "Bad Request", "text/plain", e.what()));
            close_after_flush();
            return;
        }
        if (!req->wants_websocket()) {
            serve_static(*req);
            close_after_flush();
            return;
        }
        enqueue_bytes(ws::handshake_response(*req->header("sec-websocket-key")));
        transport_ = Transport::WebSocket;
        server_.activate(shared_from_this());

        ws::FrameDecoder decoder(true);
        decoder.feed(std::string_view(buffered).substr(req->consumed));
        while (true) {
            while (auto m = decoder.next()) {
                using K = ws::FrameDecoder::Message::Kind;
                switch (m->kind) {
                case K::Text:
                case K::Binary:
                    if (m->payload.empty())
                        send_error("empty frame");
                    else
                        handle_text(m->payload);
                    break;
                case K::Ping:
                    enqueue_bytes(ws::encode_frame(ws::Opcode::Pong, m->payload));
                    break;
                case K::Pong:
                    break;
                case K::Close:
                    enqueue_bytes(ws::close_frame(1000));
                    close_after_flush();
                    return;
                case K::Violation:
                case K::Oversize:
                    ++server_.protocol_errors_;
                    enqueue_bytes(ws::close_frame(m->close_code));
                    close_after_flush();
                    return;
                }
            }
            if (!recv_some(chunk))
                return;
            decoder.feed(chunk);
        }
    }

    void serve_static(const ws::HttpRequest& req)
    {
        const auto& dir = server_.config_.static_dir;
        std::string target = req.target.substr(0, req.target.find('?'));
        if (req.method != "GET" || !dir) {
            enqueue_bytes(http_response(404, "Not Found", "text/plain", "not found"));
            return;
        }
        if (target.empty() || target == "/")
            target = "/index.html";
        const std::filesystem::path rel = std::filesystem::path(target).relative_path();
        bool safe = true;
        for (const auto& part : rel)
            if (part == "..")
                safe = false;
        const std::filesystem::path file = *dir / rel;
        std::ifstream in(file, std::ios::binary);
        if (!safe || !std::filesystem::is_regular_file(file) || !in) {
            enqueue_bytes(http_response(404, "Not Found", "text/plain", "not found"));
            return;
        }
        std::ostringstream body;
        body << in.rdbuf();
        enqueue_bytes(http_response(200, "OK", content_type(file), body.str()));
    }

    void handle_text(const std::string& text)
    {
        protocol::ClientMessage msg;
        try {
            msg = protocol::decode_client(text);
        } catch (const protocol::ProtocolError& e) {
            send_error(e.what());
            return;
        }
        if (msg.seq) {
            if (last_client_seq_ && *msg.seq <= *last_client_seq_) {
                send_error("seq must be strictly increasing");
                return;
            }
            last_client_seq_ = msg.seq;
        }
        if (auto c = protocol::to_command(msg.body))
            server_.session_.post(std::move(*c));
    }

    Server& server_;
    int fd_;
    std::string peer_;
    std::atomic<Transport> transport_{Transport::Unknown};
    std::thread reader_, writer_;
    std::atomic<bool> reader_done_{false}, writer_done_{false};

    std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Outgoing> queue_;
    std::size_t droppable_queued_ = 0;
    std::uint64_t seq_ = 0;
    bool closing_ = false;
    bool flush_then_close_ = false;
    std::optional<std::uint64_t> last_client_seq_;
};

Server::Server(Session& session, ServerConfig config) : session_(session), config_(std::move(config)) {}

Server::~Server() { stop(); }

void Server::start()
{
    if (running_)
        return;
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE | AI_NUMERICSERV;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(config_.port);
    if (const int rc = ::getaddrinfo(config_.host.c_str(), port.c_str(), &hints, &res); rc != 0)
        throw IoError("cannot resolve " + config_.host + ": " + ::gai_strerror(rc));
    std::string last_error = "no usable address";
    for (addrinfo* a = res; a; a = a->ai_next) {
        const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
        if (fd < 0)
            continue;
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
            listen_fd_ = fd;
            break;
        }
        last_error = std::strerror(errno);
        ::close(fd);
    }
    ::freeaddrinfo(res);
    if (listen_fd_ < 0)
        throw IoError("cannot listen on " + config_.host + ":" + port + ": " + last_error);

    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                       : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);

    subscription_ = session_.subscribe([this](const Event& e) { on_event(e); });
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    spdlog::info("listening on {}:{}", config_.host, port_);
}

void Server::stop()
{
    if (!running_.exchange(false))
        return;
    if (subscription_)
        session_.unsubscribe(*subscription_);
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (acceptor_.joinable())
        acceptor_.join();
    listen_fd_ = -1;
    {
        std::lock_guard lock(all_mutex_);
        for (auto& c : all_)
            c->hard_close();
    }
    reap(true);
}

void Server::accept_loop()
{
    while (running_) {
        sockaddr_storage addr{};
        socklen_t len = sizeof addr;
        const int fd = ::accept4(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len, SOCK_CLOEXEC);
        if (fd < 0) {
            if (errno == EINTR || errno == ECONNABORTED)
                continue;
            break;
        }
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        char host[NI_MAXHOST] = "?", serv[NI_MAXSERV] = "?";
        ::getnameinfo(reinterpret_cast<sockaddr*>(&addr), len, host, sizeof host, serv, sizeof serv,
                      NI_NUMERICHOST | NI_NUMERICSERV);
        auto conn = std::make_shared<Connection>(*this, fd, std::string(host) + ":" + serv);
        ++connections_;
        reap(false);
        {
            std::lock_guard lock(all_mutex_);
            all_.push_back(conn);
        }
        spdlog::debug("client {} connected", conn->peer());
        conn->start();
    }
}

void Server::reap(bool all)
{
    std::vector<std::shared_ptr<Connection>> done;
    {
        std::lock_guard lock(all_mutex_);
        auto it = std::partition(all_.begin(), all_.end(), [all](const auto& c) { return !all && !c->finished(); });
        done.assign(it, all_.end());
        all_.erase(it, all_.end());
    }
    for (auto& c : done)
        c->join();
}

void Server::activate(const std::shared_ptr<Connection>& conn)
{
    std::lock_guard lock(clients_mutex_);
    const SessionInfo info = session_.info();
    protocol::Hello hello;
    hello.layer_sizes = info.layer_sizes;
    hello.hyperparams = info.hyperparams;
    hello.state = info.state;
    hello.sonification = info.sonification;
    conn->enqueue(protocol::EncodedBody(hello), false);
    conn->enqueue(protocol::EncodedBody(ev::StateChanged{info.state}), false);
    active_.push_back(conn);
}

void Server::deactivate(const Connection* conn)
{
    std::lock_guard lock(clients_mutex_);
    std::erase_if(active_, [conn](const auto& c) { return c.get() == conn; });
}

void Server::on_event(const Event& event)
{
    std::optional<protocol::EncodedBody> body;
    try {
        body.emplace(protocol::to_server_body(event));
    } catch (const std::exception& e) {
        spdlog::error("cannot encode event: {}", e.what());
        return;
    }
    const bool can_drop = droppable(event);
    std::lock_guard lock(clients_mutex_);
    for (const auto& c : active_)
        c->enqueue(*body, can_drop);
}

std::size_t Server::client_count() const
{
    std::lock_guard lock(clients_mutex_);
    return active_.size();
}

ServerStats Server::stats() const
{
    return {connections_.load(), protocol_errors_.load(), dropped_.load()};
}

} // namespace aiive
