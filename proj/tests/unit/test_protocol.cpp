#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <sstream>

#include "aiive/error.hpp"
#include "aiive/protocol.hpp"
#include "aiive/rng.hpp"
#include "aiive/websocket.hpp"
#include "json.hpp"
#include "support/corpus.hpp"

using namespace aiive;
using namespace aiive::protocol;
using nlohmann::json;

TEST_CASE("client messages round-trip")
{
    for (const ClientMessage& m : testing_support::client_corpus()) {
        const std::string text = encode(m);
        CAPTURE(text);
        CHECK(decode_client(text) == m);
        CHECK(json::parse(text)["type"] == type_tag(m.body));
    }
}

TEST_CASE("server messages round-trip")
{
    for (const ServerMessage& m : testing_support::server_corpus()) {
        const std::string text = encode(m);
        CAPTURE(text.substr(0, 200));
        CHECK(decode_server(text) == m);
        CHECK(json::parse(text)["seq"] == m.seq);
    }
}

TEST_CASE("every tag appears in the corpus")
{
    std::set<std::string> client, server;
    for (const auto& m : testing_support::client_corpus())
        client.insert(std::string(type_tag(m.body)));
    for (const auto& m : testing_support::server_corpus())
        server.insert(std::string(type_tag(m.body)));
    CHECK(client == std::set<std::string>{"hello_ack", "pause", "resume", "set_hyperparams", "add_neuron",
                                          "remove_neuron", "drag_node", "release_node", "set_sonification",
                                          "evaluate_now"});
    CHECK(server == std::set<std::string>{"hello", "state", "epoch", "layout", "hyperparams", "structure",
                                          "eval", "audio", "error"});
}

TEST_CASE("field order does not matter on decode")
{
    const auto m = decode_client(R"({"position":[1,2,3],"seq":4,"node_id":7,"type":"drag_node"})");
    CHECK(m == ClientMessage{4, cmd::DragNode{7, {1, 2, 3}}});
    const auto s = decode_server(R"({"loss":0.5,"type":"eval","accuracy":0.25,"seq":9})");
    CHECK(s == ServerMessage{9, ev::EvalResult{{0.25, 0.5}}});
}

TEST_CASE("unknown fields are ignored, unknown tags rejected")
{
    CHECK(decode_client(R"({"type":"pause","extra":[1,2]})").body == ClientBody{cmd::Pause{}});
    CHECK_THROWS_AS(decode_client(R"({"type":"teleport"})"), ProtocolError);
    CHECK_THROWS_AS(decode_client(R"({"type":"hello"})"), ProtocolError);
    CHECK_THROWS_AS(decode_server(R"({"type":"pause","seq":1})"), ProtocolError);
}

TEST_CASE("malformed client messages")
{
    const char* bad[] = {
        "",
        "null",
        "[]",
        "\"pause\"",
        "{",
        R"({"seq":1})",
        R"({"type":5})",
        R"({"type":"pause","seq":-1})",
        R"({"type":"pause","seq":1.5})",
        R"({"type":"pause","seq":"1"})",
        R"({"type":"set_hyperparams","learning_rate":0.1})",
        R"({"type":"set_hyperparams","learning_rate":"0.1","momentum":0.9})",
        R"({"type":"add_neuron","layer":1,"position":[0,0]})",
        R"({"type":"add_neuron","layer":1,"position":[0,0,"x"]})",
        R"({"type":"add_neuron","layer":1.5,"position":[0,0,0]})",
        R"({"type":"add_neuron","layer":1e20,"position":[0,0,0]})",
        R"({"type":"add_neuron","layer":1,"position":{"x":0}})",
        R"({"type":"remove_neuron","layer":1,"position":[0,0,0]})",
        R"({"type":"drag_node","node_id":1})",
        R"({"type":"release_node"})",
        R"({"type":"set_sonification","mode":"both"})",
        R"({"type":"set_sonification"})",
        "{\"type\":\"pause\",\"text\":\"\xff\xfe\"}",
    };
    for (const char* text : bad) {
        CAPTURE(text);
        CHECK_THROWS_AS(decode_client(text), ProtocolError);
    }
}

TEST_CASE("integral floats are accepted as integers")
{
    CHECK(decode_client(R"({"type":"release_node","node_id":4.0})").body == ClientBody{cmd::ReleaseNode{4}});
}

TEST_CASE("non-finite numbers are refused when encoding")
{
    CHECK_THROWS_AS(encode(ClientMessage{1, cmd::SetHyperparams{std::nan(""), 0.5}}), InvalidArgument);
    CHECK_THROWS_AS(encode(ServerMessage{1, ev::EvalResult{{INFINITY, 0.0}}}), InvalidArgument);
}

TEST_CASE("numbers survive at full precision")
{
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const double lr = std::ldexp(rng.uniform(), static_cast<int>(rng.below(200)) - 100);
        const double mu = rng.uniform();
        const ClientMessage m{i, cmd::SetHyperparams{lr, mu}};
        const auto back = std::get<cmd::SetHyperparams>(decode_client(encode(m)).body);
        CHECK(back.learning_rate == lr);
        CHECK(back.momentum == mu);
    }
}

TEST_CASE("epoch weights match the layer shapes")
{
    const ParamSet p = testing_support::random_params({2304, 3, 4, 7}, 3);
    const std::string text = encode(ServerMessage{1, ev::EpochCompleted{{1, 0.5, 1.0}, {}, p}});
    const json j = json::parse(text);
    const json& w = j["weights"];
    CHECK(w["w1"].size() == 3 * 2304);
    CHECK(w["w1_rows"] == 3);
    CHECK(w["w1_cols"] == 2304);
    CHECK(w["b1"].size() == 3);
    CHECK(w["w2"].size() == 4 * 3);
    CHECK(w["w2_rows"] == 4);
    CHECK(w["w2_cols"] == 3);
    CHECK(w["b2"].size() == 4);
    CHECK(w["w3"].size() == 7 * 4);
    CHECK(w["w3_rows"] == 7);
    CHECK(w["w3_cols"] == 4);
    CHECK(w["b3"].size() == 7);
    // Row-major.
    CHECK(w["w1"][2305].get<double>() == p.layers[0].weight(1, 1));
    CHECK(w["w3"][4 * 6 + 3].get<double>() == p.layers[2].weight(6, 3));

    json broken = j;
    broken["weights"]["w2"].erase(0);
    CHECK_THROWS_AS(decode_server(broken.dump()), ProtocolError);
    broken = j;
    broken["weights"]["b3"].push_back(1.0);
    CHECK_THROWS_AS(decode_server(broken.dump()), ProtocolError);
    broken = j;
    broken["weights"]["w1_rows"] = std::numeric_limits<std::uint64_t>::max();
    CHECK_THROWS_AS(decode_server(broken.dump()), ProtocolError);
}

TEST_CASE("layout message shape")
{
    LayoutSnapshot snap;
    snap.nodes = {{0, NodeKind::InputAggregate, {1, 2, 3}}, {5, NodeKind::Hidden2, {0, 0, 0}}};
    snap.edges = {{0, 5, -0.5}};
    const json j = json::parse(encode(ServerMessage{3, ev::LayoutFrame{snap}}));
    CHECK(j["type"] == "layout");
    CHECK(j["nodes"][0]["kind"] == "input");
    CHECK(j["nodes"][1]["kind"] == "hidden2");
    CHECK(j["nodes"][0]["pos"] == json::array({1.0, 2.0, 3.0}));
    CHECK(j["edges"][0]["w"] == -0.5);
}

TEST_CASE("hello carries version, shapes, rates and mappings")
{
    Hello h;
    h.layer_sizes = {2304, 3, 4, 7};
    h.sonification = SonificationConfig::defaults(7);
    const json j = json::parse(encode(ServerMessage{1, h}));
    CHECK(j["type"] == "hello");
    CHECK(j["protocol_version"] == 1);
    CHECK(j["layer_sizes"] == json::array({2304, 3, 4, 7}));
    CHECK(j["hyperparams"]["learning_rate"] == 0.1);
    CHECK(j["sonification"]["mode"] == "accuracy_both");
    CHECK(j["sonification"]["mappings"]["learning_rate"]["scale"] == "log");
    CHECK(j["sonification"]["mappings"]["accuracy"]["f_max"] == 880.0);
}

TEST_CASE("encoded bodies can be stamped with any seq")
{
    const EncodedBody body(ev::StateChanged{SessionState::Paused});
    CHECK(body.tag() == "state");
    CHECK(decode_server(body.with_seq(1)) == ServerMessage{1, ev::StateChanged{SessionState::Paused}});
    CHECK(decode_server(body.with_seq(77)).seq == 77);
}

TEST_CASE("command conversions")
{
    CHECK_FALSE(to_client_body(cmd::Shutdown{}).has_value());
    CHECK(to_client_body(cmd::Pause{}) == ClientBody{cmd::Pause{}});
    CHECK_FALSE(to_command(HelloAck{}).has_value());
    CHECK(to_command(cmd::EvaluateNow{}) == Command{cmd::EvaluateNow{}});
    CHECK(std::holds_alternative<ev::Audio>(to_server_body(ev::Audio{1, 2, {}, {}})));
}

TEST_CASE("script files")
{
    std::istringstream in(R"(# warm-up
{"at_step": 0, "cmd": {"type": "set_sonification", "mode": "split"}}

{"at_step": 10, "cmd": {"type": "pause"}}
{"at_step": 10, "cmd": {"type": "drag_node", "node_id": 3, "position": [0.5, 0, 0]}}
{"at_step": 10, "cmd": {"type": "release_node", "node_id": 3}}
{"at_step": 10, "cmd": {"type": "resume"}}
{"at_step": 25, "cmd": {"type": "shutdown"}}
)");
    const auto script = parse_script(in);
    REQUIRE(script.size() == 6);
    CHECK(script[0].cmd == Command{cmd::SetSonification{SonificationMode::Split}});
    CHECK(script[2].cmd == Command{cmd::DragNode{3, {0.5, 0, 0}}});
    CHECK(script[5].at_step == 25);
    CHECK(std::holds_alternative<cmd::Shutdown>(script[5].cmd));

    std::ostringstream out;
    for (const auto& e : script)
        out << encode_script_entry(e) << "\n";
    std::istringstream again(out.str());
    CHECK(parse_script(again) == script);

    std::istringstream backwards(R"({"at_step": 5, "cmd": {"type": "pause"}}
{"at_step": 4, "cmd": {"type": "resume"}})");
    CHECK_THROWS_AS(parse_script(backwards), ProtocolError);
    std::istringstream ack(R"({"at_step": 5, "cmd": {"type": "hello_ack"}})");
    CHECK_THROWS_AS(parse_script(ack), ProtocolError);
    std::istringstream junk("not json\n");
    try {
        parse_script(junk);
        FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
}

TEST_CASE("length-prefixed frames")
{
    const std::string f = encode_frame("abc");
    CHECK(f == std::string("\0\0\0\3abc", 7));

    FrameDecoder d;
    // Byte-at-a-time delivery.
    const std::string stream = encode_frame("{\"a\":1}") + encode_frame("xy");
    std::vector<std::string> got;
    for (char c : stream) {
        d.feed(std::string_view(&c, 1));
        while (auto fr = d.next()) {
            REQUIRE(fr->kind == FrameDecoder::Frame::Kind::Body);
            got.push_back(fr->body);
        }
    }
    CHECK(got == std::vector<std::string>{"{\"a\":1}", "xy"});
    CHECK(d.buffered() == 0);
}

TEST_CASE("empty and oversize frames")
{
    FrameDecoder d;
    d.feed(std::string("\0\0\0\0", 4) + encode_frame("ok"));
    auto a = d.next();
    REQUIRE(a);
    CHECK(a->kind == FrameDecoder::Frame::Kind::Empty);
    auto b = d.next();
    REQUIRE(b);
    CHECK(b->body == "ok");

    FrameDecoder big;
    const std::uint32_t n = kMaxFrameBytes + 1;
    const char hdr[4] = {static_cast<char>(n >> 24), static_cast<char>(n >> 16), static_cast<char>(n >> 8),
                         static_cast<char>(n)};
    big.feed(std::string_view(hdr, 4));
    auto c = big.next();
    REQUIRE(c);
    CHECK(c->kind == FrameDecoder::Frame::Kind::Oversize);
    CHECK(big.dead());
    big.feed(encode_frame("later"));
    CHECK_FALSE(big.next());

    FrameDecoder exact;
    exact.feed(encode_frame(std::string(kMaxFrameBytes, 'x')));
    auto e = exact.next();
    REQUIRE(e);
    CHECK(e->body.size() == kMaxFrameBytes);
}

TEST_CASE("decoders survive random bytes")
{
    Rng rng(2024);
    std::size_t bodies = 0, errors = 0;
    for (int frame = 0; frame < 10000; ++frame) {
        FrameDecoder d;
        std::string bytes;
        const auto kind = rng.below(4);
        if (kind == 0) {
            bytes.resize(rng.below(64));
            for (char& c : bytes)
                c = static_cast<char>(rng.below(256));
        } else {
            std::string body(rng.below(48), '\0');
            for (char& c : body)
                c = kind == 1 ? static_cast<char>(rng.below(256)) : "{}[]\":,0123456789.eE-+ truefalsnl"[rng.below(34)];
            if (kind == 3)
                body = "{\"type\":\"" + std::string(rng.below(2) ? "drag_node" : "set_hyperparams") + "\"," + body;
            bytes = encode_frame(body);
        }
        d.feed(bytes);
        while (auto f = d.next()) {
            if (f->kind != FrameDecoder::Frame::Kind::Body)
                continue;
            ++bodies;
            try {
                decode_client(f->body);
            } catch (const ProtocolError&) {
                ++errors;
            }
        }
    }
    CHECK(bodies > 5000);
    CHECK(errors > 0);
}

TEST_CASE("websocket accept key")
{
    CHECK(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("http request parsing")
{
    const std::string req = "GET /ws HTTP/1.1\r\nHost: x\r\nUpgrade: WebSocket\r\nConnection: keep-alive, Upgrade\r\n"
                            "Sec-WebSocket-Key: abc\r\n\r\nrest";
    CHECK_FALSE(ws::parse_http_request(req.substr(0, 20)));
    const auto r = ws::parse_http_request(req);
    REQUIRE(r);
    CHECK(r->method == "GET");
    CHECK(r->target == "/ws");
    CHECK(r->header("Sec-WebSocket-Key") == "abc");
    CHECK(r->wants_websocket());
    CHECK(r->consumed == req.size() - 4);

    const auto plain = ws::parse_http_request("GET /index.html HTTP/1.1\r\nHost: x\r\n\r\n");
    REQUIRE(plain);
    CHECK_FALSE(plain->wants_websocket());
    CHECK_THROWS_AS(ws::parse_http_request("GARBAGE\r\n\r\n"), ProtocolError);
    CHECK_THROWS_AS(ws::parse_http_request("GET / HTTP/1.1\r\nNoColon\r\n\r\n"), ProtocolError);
    CHECK_THROWS_AS(ws::parse_http_request("G" + std::string(ws::kMaxHeaderBytes + 1, 'x')), ProtocolError);
}

TEST_CASE("websocket frames round-trip with and without masks")
{
    for (std::size_t len : {0u, 1u, 125u, 126u, 65535u, 65536u, 200000u}) {
        std::string payload(len, '\0');
        for (std::size_t i = 0; i < len; ++i)
            payload[i] = static_cast<char>('a' + i % 26);
        ws::FrameDecoder server(true), client(false);
        server.feed(ws::encode_frame(ws::Opcode::Text, payload, std::array<std::uint8_t, 4>{1, 2, 3, 4}));
        client.feed(ws::encode_frame(ws::Opcode::Text, payload));
        auto a = server.next();
        auto b = client.next();
        REQUIRE(a);
        REQUIRE(b);
        CHECK(a->kind == ws::FrameDecoder::Message::Kind::Text);
        CHECK(a->payload == payload);
        CHECK(b->payload == payload);
    }
}

TEST_CASE("websocket fragmentation and control frames")
{
    const std::array<std::uint8_t, 4> m{9, 8, 7, 6};
    std::string first = ws::encode_frame(ws::Opcode::Text, "hel", m);
    first[0] = static_cast<char>(first[0] & 0x7F); // not final
    std::string ping = ws::encode_frame(ws::Opcode::Ping, "p", m);
    std::string rest = ws::encode_frame(ws::Opcode::Continuation, "lo", m);
    ws::FrameDecoder d(true);
    d.feed(first + ping + rest);
    auto p = d.next();
    REQUIRE(p);
    CHECK(p->kind == ws::FrameDecoder::Message::Kind::Ping);
    auto t = d.next();
    REQUIRE(t);
    CHECK(t->payload == "hello");

    ws::FrameDecoder c(true);
    c.feed(ws::close_frame(1001, "bye", m));
    auto cl = c.next();
    REQUIRE(cl);
    CHECK(cl->kind == ws::FrameDecoder::Message::Kind::Close);
    CHECK(cl->close_code == 1001);
}

TEST_CASE("websocket violations")
{
    ws::FrameDecoder unmasked(true);
    unmasked.feed(ws::encode_frame(ws::Opcode::Text, "x"));
    CHECK(unmasked.next()->kind == ws::FrameDecoder::Message::Kind::Violation);

    ws::FrameDecoder reserved(true);
    std::string f = ws::encode_frame(ws::Opcode::Text, "x", std::array<std::uint8_t, 4>{});
    f[0] = static_cast<char>(f[0] | 0x40);
    reserved.feed(f);
    CHECK(reserved.next()->kind == ws::FrameDecoder::Message::Kind::Violation);

    ws::FrameDecoder orphan(true);
    orphan.feed(ws::encode_frame(ws::Opcode::Continuation, "x", std::array<std::uint8_t, 4>{}));
    CHECK(orphan.next()->kind == ws::FrameDecoder::Message::Kind::Violation);

    ws::FrameDecoder big(true);
    big.feed(std::string("\x81\xff\x00\x00\x00\x00\x00\x20\x00\x00", 10));
    auto o = big.next();
    CHECK(o->kind == ws::FrameDecoder::Message::Kind::Oversize);
    CHECK(o->close_code == 1009);
}

TEST_CASE("websocket decoder survives random bytes")
{
    Rng rng(77);
    for (int i = 0; i < 5000; ++i) {
        ws::FrameDecoder d(rng.below(2) == 0);
        std::string bytes(rng.below(40), '\0');
        for (char& c : bytes)
            c = static_cast<char>(rng.below(256));
        d.feed(bytes);
        int guard = 0;
        while (d.next() && ++guard < 100) {
        }
        CHECK(guard < 100);
    }
}

TEST_CASE("error text with invalid UTF-8 still encodes")
{
    const ServerMessage m{3, ev::Error{"protocol", std::string("bad \xff\xfe byte")}};
    const ServerMessage back = decode_server(encode(m));
    const auto& e = std::get<ev::Error>(back.body);
    CHECK(e.text == "bad \xef\xbf\xbd\xef\xbf\xbd byte");
}
