#include "aiive/client.hpp"

#include <cerrno>
#include <cstring>

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "aiive/error.hpp"
#include "aiive/rng.hpp"

namespace aiive {

namespace {

void send_all(int fd, std::string_view bytes)
{
    while (!bytes.empty()) {
        const ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw IoError(std::string("send failed: ") + std::strerror(errno));
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

int connect_tcp(const std::string& host, std::uint16_t port)
{
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_NUMERICSERV;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
        throw IoError("cannot resolve " + host + ": " + ::gai_strerror(rc));
    int fd = -1;
    std::string err = "no address";
    for (addrinfo* a = res; a && fd < 0; a = a->ai_next) {
        fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
        if (fd < 0)
            continue;
        if (::connect(fd, a->ai_addr, a->ai_addrlen) != 0) {
            err = std::strerror(errno);
            ::close(fd);
            fd = -1;
        }
    }
    ::freeaddrinfo(res);
    if (fd < 0)
        throw IoError("cannot connect to " + host + ":" + service + ": " + err);
    return fd;
}

} // namespace

Client::Client(int fd, Transport transport) : fd_(fd), transport_(transport) {}

Client::Client(Client&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)),
      transport_(other.transport_),
      raw_(std::move(other.raw_)),
      ws_(std::move(other.ws_)),
      mask_state_(other.mask_state_),
      closed_(other.closed_)
{
}

Client& Client::operator=(Client&& other) noexcept
{
    if (this != &other) {
        close();
        fd_ = std::exchange(other.fd_, -1);
        transport_ = other.transport_;
        raw_ = std::move(other.raw_);
        ws_ = std::move(other.ws_);
        mask_state_ = other.mask_state_;
        closed_ = other.closed_;
    }
    return *this;
}

Client::~Client() { close(); }

void Client::close()
{
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Client Client::connect(const std::string& host, std::uint16_t port, Transport transport,
                       std::chrono::milliseconds timeout)
{
    Client c(connect_tcp(host, port), transport);
    if (transport == Transport::Raw)
        return c;

    // Fixed key; the server only echoes a hash of it.
    const std::string key = "dGhlIHNhbXBsZSBub25jZQ==";
    send_all(c.fd_, "GET /ws HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                    "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n");
    std::string buffered;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        const auto end = buffered.find("\r\n\r\n");
        if (end != std::string::npos) {
            const std::string head = buffered.substr(0, end);
            if (head.rfind("HTTP/1.1 101", 0) != 0 || head.find(ws::accept_key(key)) == std::string::npos)
                throw IoError("WebSocket handshake rejected: " + head.substr(0, head.find("\r\n")));
            c.ws_.feed(std::string_view(buffered).substr(end + 4));
            return c;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        pollfd pfd{c.fd_, POLLIN, 0};
        if (left.count() <= 0 || ::poll(&pfd, 1, static_cast<int>(left.count())) <= 0)
            throw IoError("WebSocket handshake timed out");
        char buf[4096];
        const ssize_t n = ::recv(c.fd_, buf, sizeof buf, 0);
        if (n <= 0)
            throw IoError("connection closed during WebSocket handshake");
        buffered.append(buf, static_cast<std::size_t>(n));
    }
}

void Client::send(const protocol::ClientMessage& message) { send_text(protocol::encode(message)); }

void Client::send_text(std::string_view body)
{
    if (transport_ == Transport::Raw) {
        send_raw(protocol::encode_frame(body));
        return;
    }
    const std::uint64_t r = Rng::splitmix64(mask_state_);
    const std::array<std::uint8_t, 4> mask{static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(r >> 8),
                                           static_cast<std::uint8_t>(r >> 16), static_cast<std::uint8_t>(r >> 24)};
    send_raw(ws::encode_frame(ws::Opcode::Text, body, mask));
}

void Client::send_raw(std::string_view bytes)
{
    if (fd_ < 0)
        throw IoError("client is closed");
    send_all(fd_, bytes);
}

bool Client::fill(std::chrono::milliseconds timeout)
{
    if (fd_ < 0 || closed_)
        return false;
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::max<std::int64_t>(0, timeout.count())));
    if (ready <= 0)
        return false;
    char buf[65536];
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) {
        closed_ = true;
        return false;
    }
    if (transport_ == Transport::Raw)
        raw_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    else
        ws_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    return true;
}

std::optional<std::string> Client::next_body()
{
    if (transport_ == Transport::Raw) {
        while (auto f = raw_.next()) {
            if (f->kind == protocol::FrameDecoder::Frame::Kind::Body)
                return std::move(f->body);
            if (f->kind == protocol::FrameDecoder::Frame::Kind::Oversize) {
                closed_ = true;
                return std::nullopt;
            }
        }
        return std::nullopt;
    }
    while (auto m = ws_.next()) {
        using K = ws::FrameDecoder::Message::Kind;
        if (m->kind == K::Text || m->kind == K::Binary)
            return std::move(m->payload);
        if (m->kind == K::Close || m->kind == K::Violation || m->kind == K::Oversize) {
            closed_ = true;
            return std::nullopt;
        }
    }
    return std::nullopt;
}

std::optional<protocol::ServerMessage> Client::receive(std::chrono::milliseconds timeout)
{
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        if (auto body = next_body())
            return protocol::decode_server(*body);
        if (closed_)
            throw IoError("connection closed by server");
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0)
            return std::nullopt;
        fill(left);
    }
}

} // namespace aiive
