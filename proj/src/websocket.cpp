#include "aiive/websocket.hpp"

#include <algorithm>
#include <cctype>

#include <openssl/evp.h>
#include <openssl/sha.h>

namespace aiive::ws {

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

bool has_token(const std::string& value, std::string_view token)
{
    std::size_t start = 0;
    const std::string v = lower(value);
    while (start <= v.size()) {
        auto end = v.find(',', start);
        if (end == std::string::npos)
            end = v.size();
        if (trim(std::string_view(v).substr(start, end - start)) == token)
            return true;
        start = end + 1;
    }
    return false;
}

} // namespace

std::optional<std::string> HttpRequest::header(const std::string& name) const
{
    auto it = headers.find(lower(name));
    if (it == headers.end())
        return std::nullopt;
    return it->second;
}

bool HttpRequest::wants_websocket() const
{
    const auto upgrade = header("upgrade");
    const auto connection = header("connection");
    return method == "GET" && upgrade && has_token(*upgrade, "websocket") && connection &&
           has_token(*connection, "upgrade") && header("sec-websocket-key").has_value();
}

std::optional<HttpRequest> parse_http_request(std::string_view bytes)
{
    const auto end = bytes.find("\r\n\r\n");
    if (end == std::string_view::npos) {
        if (bytes.size() > kMaxHeaderBytes)
            throw protocol::ProtocolError("HTTP header block too large");
        return std::nullopt;
    }
    if (end + 4 > kMaxHeaderBytes)
        throw protocol::ProtocolError("HTTP header block too large");

    HttpRequest req;
    req.consumed = end + 4;
    const std::string_view head = bytes.substr(0, end);
    std::size_t line_end = head.find("\r\n");
    const std::string_view request_line = head.substr(0, line_end);
    const auto sp1 = request_line.find(' ');
    const auto sp2 = sp1 == std::string_view::npos ? sp1 : request_line.find(' ', sp1 + 1);
    if (sp1 == std::string_view::npos || sp2 == std::string_view::npos ||
        request_line.substr(sp2 + 1).substr(0, 5) != "HTTP/")
        throw protocol::ProtocolError("malformed HTTP request line");
    req.method = std::string(request_line.substr(0, sp1));
    req.target = std::string(request_line.substr(sp1 + 1, sp2 - sp1 - 1));

    while (line_end != std::string_view::npos) {
        const std::size_t start = line_end + 2;
        line_end = head.find("\r\n", start);
        const std::string_view line = head.substr(start, line_end == std::string_view::npos ? head.npos : line_end - start);
        if (line.empty())
            continue;
        const auto colon = line.find(':');
        if (colon == std::string_view::npos || colon == 0)
            throw protocol::ProtocolError("malformed HTTP header line");
        req.headers[lower(std::string(line.substr(0, colon)))] = trim(line.substr(colon + 1));
    }
    return req;
}

std::string accept_key(std::string_view client_key)
{
    const std::string input = std::string(client_key) + std::string(kGuid);
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(input.data()), input.size(), digest);
    unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
    const int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
    return std::string(reinterpret_cast<const char*>(out), static_cast<std::size_t>(n));
}

std::string handshake_response(std::string_view client_key)
{
    return "HTTP/1.1 101 Switching Protocols\r\n"
           "Upgrade: websocket\r\n"
           "Connection: Upgrade\r\n"
           "Sec-WebSocket-Accept: " +
           accept_key(client_key) + "\r\n\r\n";
}

std::string encode_frame(Opcode op, std::string_view payload, std::optional<std::array<std::uint8_t, 4>> mask)
{
    std::string out;
    out.reserve(payload.size() + 14);
    out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(op)));
    const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
    const std::uint64_t n = payload.size();
    if (n < 126) {
        out.push_back(static_cast<char>(mask_bit | n));
    } else if (n <= 0xFFFF) {
        out.push_back(static_cast<char>(mask_bit | 126));
        out.push_back(static_cast<char>(n >> 8));
        out.push_back(static_cast<char>(n));
    } else {
        out.push_back(static_cast<char>(mask_bit | 127));
        for (int shift = 56; shift >= 0; shift -= 8)
            out.push_back(static_cast<char>(n >> shift));
    }
    if (mask) {
        for (std::uint8_t b : *mask)
            out.push_back(static_cast<char>(b));
        const std::size_t base = out.size();
        out.append(payload);
        for (std::size_t i = 0; i < payload.size(); ++i)
            out[base + i] = static_cast<char>(static_cast<std::uint8_t>(out[base + i]) ^ (*mask)[i % 4]);
    } else {
        out.append(payload);
    }
    return out;
}

std::string close_frame(std::uint16_t code, std::string_view reason, std::optional<std::array<std::uint8_t, 4>> mask)
{
    std::string body;
    body.push_back(static_cast<char>(code >> 8));
    body.push_back(static_cast<char>(code));
    body.append(reason.substr(0, 123));
    return encode_frame(Opcode::Close, body, mask);
}

void FrameDecoder::feed(std::string_view bytes)
{
    if (dead_)
        return;
    if (pos_ == buffer_.size()) {
        buffer_.clear();
        pos_ = 0;
    } else if (pos_ > 65536 && pos_ * 2 > buffer_.size()) {
        buffer_.erase(0, pos_);
        pos_ = 0;
    }
    buffer_.append(bytes);
}

std::optional<FrameDecoder::Message> FrameDecoder::fail(Message::Kind kind)
{
    dead_ = true;
    buffer_.clear();
    partial_.clear();
    pos_ = 0;
    Message m;
    m.kind = kind;
    m.close_code = kind == Message::Kind::Oversize ? 1009 : 1002;
    return m;
}

std::optional<FrameDecoder::Message> FrameDecoder::next()
{
    while (!dead_) {
        const std::size_t avail = buffer_.size() - pos_;
        if (avail < 2)
            return std::nullopt;
        const auto* p = reinterpret_cast<const std::uint8_t*>(buffer_.data() + pos_);
        const bool fin = p[0] & 0x80;
        if (p[0] & 0x70)
            return fail(Message::Kind::Violation);
        const auto op = static_cast<Opcode>(p[0] & 0x0F);
        const bool masked = p[1] & 0x80;
        if (masked != expect_masked_)
            return fail(Message::Kind::Violation);
        std::uint64_t len = p[1] & 0x7F;
        std::size_t header = 2;
        if (len == 126) {
            if (avail < 4)
                return std::nullopt;
            len = (std::uint64_t{p[2]} << 8) | p[3];
            header = 4;
        } else if (len == 127) {
            if (avail < 10)
                return std::nullopt;
            len = 0;
            for (int i = 0; i < 8; ++i)
                len = (len << 8) | p[2 + i];
            header = 10;
        }
        const bool control = static_cast<std::uint8_t>(op) & 0x08;
        switch (op) {
        case Opcode::Continuation:
        case Opcode::Text:
        case Opcode::Binary:
        case Opcode::Close:
        case Opcode::Ping:
        case Opcode::Pong:
            break;
        default:
            return fail(Message::Kind::Violation);
        }
        if (control && (!fin || len > 125))
            return fail(Message::Kind::Violation);
        if (!control && len > max_message_ - std::min<std::size_t>(partial_.size(), max_message_))
            return fail(Message::Kind::Oversize);
        if (op == Opcode::Continuation && !partial_op_)
            return fail(Message::Kind::Violation);
        if ((op == Opcode::Text || op == Opcode::Binary) && partial_op_)
            return fail(Message::Kind::Violation);

        const std::size_t mask_len = masked ? 4 : 0;
        if (avail < header + mask_len + len)
            return std::nullopt;
        std::string payload(buffer_.data() + pos_ + header + mask_len, static_cast<std::size_t>(len));
        if (masked) {
            const std::uint8_t* m = p + header;
            for (std::size_t i = 0; i < payload.size(); ++i)
                payload[i] = static_cast<char>(static_cast<std::uint8_t>(payload[i]) ^ m[i % 4]);
        }
        pos_ += header + mask_len + static_cast<std::size_t>(len);

        if (control) {
            Message msg;
            msg.payload = std::move(payload);
            if (op == Opcode::Ping) {
                msg.kind = Message::Kind::Ping;
            } else if (op == Opcode::Pong) {
                msg.kind = Message::Kind::Pong;
            } else {
                msg.kind = Message::Kind::Close;
                if (msg.payload.size() >= 2)
                    msg.close_code = static_cast<std::uint16_t>((static_cast<std::uint8_t>(msg.payload[0]) << 8) |
                                                                static_cast<std::uint8_t>(msg.payload[1]));
                else
                    msg.close_code = 1005;
                dead_ = true;
            }
            return msg;
        }

        if (op != Opcode::Continuation)
            partial_op_ = op;
        partial_ += payload;
        if (!fin)
            continue;
        Message msg;
        msg.kind = *partial_op_ == Opcode::Text ? Message::Kind::Text : Message::Kind::Binary;
        msg.payload = std::move(partial_);
        partial_.clear();
        partial_op_.reset();
        return msg;
    }
    return std::nullopt;
}

} // namespace aiive::ws
