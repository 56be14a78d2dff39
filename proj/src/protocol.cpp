#include "aiive/protocol.hpp"

#include <cmath>
#include <limits>

#include "aiive/error.hpp"
#include "json.hpp"

namespace aiive::protocol {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

// ---- encoding helpers ----

double num(double v, const char* what)
{
    if (!std::isfinite(v))
        throw InvalidArgument(std::string("cannot encode non-finite ") + what);
    return v;
}

json vec3(const Vec3& p)
{
    return json::array({num(p.x, "position"), num(p.y, "position"), num(p.z, "position")});
}

json numbers(std::span<const double> v, const char* what)
{
    json a = json::array();
    for (double x : v)
        a.push_back(num(x, what));
    return a;
}

json sizes_json(const LayerSizes& s) { return json::array({s[0], s[1], s[2], s[3]}); }

json hyper_json(const Hyperparams& hp)
{
    return {{"learning_rate", num(hp.learning_rate, "learning_rate")},
            {"momentum", num(hp.momentum, "momentum")},
            {"batch_size", hp.batch_size}};
}

json mapping_json(const FrequencyMapping& m)
{
    return {{"f_min", num(m.f_min, "f_min")},
            {"f_max", num(m.f_max, "f_max")},
            {"domain_min", num(m.domain_min, "domain_min")},
            {"domain_max", num(m.domain_max, "domain_max")},
            {"scale", to_string(m.scale)}};
}

json weights_json(const ParamSet& p)
{
    json w = json::object();
    for (std::size_t l = 0; l < kNumLayers; ++l) {
        const std::string k = std::to_string(l + 1);
        const DenseParams& d = p.layers[l];
        w["w" + k] = numbers(d.weight.flat(), "weight");
        w["w" + k + "_rows"] = d.weight.rows();
        w["w" + k + "_cols"] = d.weight.cols();
        w["b" + k] = numbers(d.bias, "bias");
    }
    return w;
}

// ---- decoding helpers ----

[[noreturn]] void bad(const std::string& what) { throw ProtocolError(what); }

const json& field(const json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end())
        bad(std::string("missing field '") + key + "'");
    return *it;
}

double get_double(const json& j, const char* key)
{
    const json& v = field(j, key);
    if (!v.is_number())
        bad(std::string("field '") + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
        bad(std::string("field '") + key + "' must be finite");
    return d;
}

std::int64_t get_int(const json& j, const char* key)
{
    const json& v = field(j, key);
    if (v.is_number_integer())
        return v.get<std::int64_t>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15)
            return static_cast<std::int64_t>(d);
    }
    bad(std::string("field '") + key + "' must be an integer");
}

int get_small_int(const json& j, const char* key)
{
    const std::int64_t v = get_int(j, key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        bad(std::string("field '") + key + "' out of range");
    return static_cast<int>(v);
}

std::uint64_t get_uint(const json& j, const char* key)
{
    const json& v = field(j, key);
    if (v.is_number_unsigned())
        return v.get<std::uint64_t>();
    const std::int64_t s = get_int(j, key);
    if (s < 0)
        bad(std::string("field '") + key + "' must be non-negative");
    return static_cast<std::uint64_t>(s);
}

std::size_t get_size(const json& j, const char* key) { return static_cast<std::size_t>(get_uint(j, key)); }

std::string get_string(const json& j, const char* key)
{
    const json& v = field(j, key);
    if (!v.is_string())
        bad(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

bool get_bool(const json& j, const char* key)
{
    const json& v = field(j, key);
    if (!v.is_boolean())
        bad(std::string("field '") + key + "' must be a boolean");
    return v.get<bool>();
}

const json& get_object(const json& j, const char* key)
{
    const json& v = field(j, key);
    if (!v.is_object())
        bad(std::string("field '") + key + "' must be an object");
    return v;
}

const json& get_array(const json& j, const char* key)
{
    const json& v = field(j, key);
    if (!v.is_array())
        bad(std::string("field '") + key + "' must be an array");
    return v;
}

double array_double(const json& v, const char* key)
{
    if (!v.is_number())
        bad(std::string("field '") + key + "' must hold numbers");
    const double d = v.get<double>();
    if (!std::isfinite(d))
        bad(std::string("field '") + key + "' must hold finite numbers");
    return d;
}

std::vector<double> get_numbers(const json& j, const char* key)
{
    const json& a = get_array(j, key);
    std::vector<double> out;
    out.reserve(a.size());
    for (const json& v : a)
        out.push_back(array_double(v, key));
    return out;
}

Vec3 get_vec3(const json& j, const char* key)
{
    const json& a = get_array(j, key);
    if (a.size() != 3)
        bad(std::string("field '") + key + "' must have 3 components");
    return {array_double(a[0], key), array_double(a[1], key), array_double(a[2], key)};
}

LayerSizes get_sizes(const json& j, const char* key)
{
    const json& a = get_array(j, key);
    if (a.size() != 4)
        bad(std::string("field '") + key + "' must have 4 entries");
    LayerSizes s{};
    for (std::size_t i = 0; i < 4; ++i) {
        if (!a[i].is_number_unsigned())
            bad(std::string("field '") + key + "' must hold non-negative integers");
        s[i] = a[i].get<std::size_t>();
    }
    return s;
}

Hyperparams get_hyper(const json& j)
{
    Hyperparams hp;
    hp.learning_rate = get_double(j, "learning_rate");
    hp.momentum = get_double(j, "momentum");
    hp.batch_size = get_size(j, "batch_size");
    return hp;
}

FrequencyMapping get_mapping(const json& j, SignalSource source)
{
    FrequencyMapping m;
    m.source = source;
    m.f_min = get_double(j, "f_min");
    m.f_max = get_double(j, "f_max");
    m.domain_min = get_double(j, "domain_min");
    m.domain_max = get_double(j, "domain_max");
    const std::string scale = get_string(j, "scale");
    if (scale == to_string(FrequencyScale::Linear))
        m.scale = FrequencyScale::Linear;
    else if (scale == to_string(FrequencyScale::LogDomain))
        m.scale = FrequencyScale::LogDomain;
    else
        bad("unknown mapping scale '" + scale + "'");
    return m;
}

SonificationMode get_mode(const json& j, const char* key)
{
    try {
        return parse_sonification_mode(get_string(j, key));
    } catch (const InvalidArgument& e) {
        bad(e.what());
    }
}

NodeKind parse_kind(const std::string& s)
{
    for (auto k : {NodeKind::InputAggregate, NodeKind::Hidden1, NodeKind::Hidden2, NodeKind::OutputAggregate})
        if (s == to_string(k))
            return k;
    bad("unknown node kind '" + s + "'");
}

ParamSet get_weights(const json& w)
{
    ParamSet p;
    for (std::size_t l = 0; l < kNumLayers; ++l) {
        const std::string k = std::to_string(l + 1);
        const std::string wk = "w" + k, rk = wk + "_rows", ck = wk + "_cols", bk = "b" + k;
        const std::size_t rows = get_size(w, rk.c_str());
        const std::size_t cols = get_size(w, ck.c_str());
        const std::vector<double> flat = get_numbers(w, wk.c_str());
        if (rows != 0 && cols > flat.size() / rows)
            bad("weights " + wk + " shape too large");
        if (flat.size() != rows * cols)
            bad("weights " + wk + " has " + std::to_string(flat.size()) + " values, expected " +
                std::to_string(rows * cols));
        Matrix m(rows, cols);
        std::copy(flat.begin(), flat.end(), m.flat().begin());
        p.layers[l].weight = std::move(m);
        p.layers[l].bias = get_numbers(w, bk.c_str());
        if (p.layers[l].bias.size() != rows)
            bad("bias " + bk + " length does not match " + rk);
    }
    return p;
}

json client_json(const ClientBody& body)
{
    json j = json::object();
    j["type"] = type_tag(body);
    std::visit(overloaded{
                   [](const HelloAck&) {},
                   [](const cmd::Pause&) {},
                   [](const cmd::Resume&) {},
                   [&](const cmd::SetHyperparams& c) {
                       j["learning_rate"] = num(c.learning_rate, "learning_rate");
                       j["momentum"] = num(c.momentum, "momentum");
                   },
                   [&](const cmd::AddNeuron& c) {
                       j["layer"] = c.layer;
                       j["position"] = vec3(c.position);
                   },
                   [&](const cmd::RemoveNeuron& c) {
                       j["layer"] = c.layer;
                       j["node_id"] = c.node_id;
                       j["position"] = vec3(c.position);
                   },
                   [&](const cmd::DragNode& c) {
                       j["node_id"] = c.node_id;
                       j["position"] = vec3(c.position);
                   },
                   [&](const cmd::ReleaseNode& c) { j["node_id"] = c.node_id; },
                   [&](const cmd::SetSonification& c) { j["mode"] = to_string(c.mode); },
                   [](const cmd::EvaluateNow&) {},
               },
               body);
    return j;
}

json server_json(const ServerBody& body)
{
    json j = json::object();
    j["type"] = type_tag(body);
    std::visit(overloaded{
                   [&](const Hello& h) {
                       j["protocol_version"] = h.protocol_version;
                       j["layer_sizes"] = sizes_json(h.layer_sizes);
                       j["hyperparams"] = hyper_json(h.hyperparams);
                       j["state"] = to_string(h.state);
                       j["sonification"] = {{"mode", to_string(h.sonification.mode)},
                                            {"mappings",
                                             {{"accuracy", mapping_json(h.sonification.accuracy)},
                                              {"loss", mapping_json(h.sonification.loss)},
                                              {"learning_rate", mapping_json(h.sonification.learning_rate)},
                                              {"momentum", mapping_json(h.sonification.momentum)}}}};
                   },
                   [&](const ev::StateChanged& e) { j["value"] = to_string(e.state); },
                   [&](const ev::EpochCompleted& e) {
                       j["epoch"] = e.metrics.epoch;
                       j["accuracy"] = num(e.metrics.val_accuracy, "accuracy");
                       j["loss"] = num(e.metrics.val_loss, "loss");
                       j["hyperparams"] = hyper_json(e.hyperparams);
                       j["weights"] = weights_json(e.weights);
                   },
                   [&](const ev::LayoutFrame& e) {
                       json nodes = json::array();
                       for (const auto& n : e.snapshot.nodes)
                           nodes.push_back({{"id", n.id}, {"kind", to_string(n.kind)}, {"pos", vec3(n.position)}});
                       json edges = json::array();
                       for (const auto& ed : e.snapshot.edges)
                           edges.push_back({{"a", ed.a}, {"b", ed.b}, {"w", num(ed.w, "edge weight")}});
                       j["nodes"] = std::move(nodes);
                       j["edges"] = std::move(edges);
                   },
                   [&](const ev::HyperparamsChanged& e) {
                       j["learning_rate"] = num(e.hyperparams.learning_rate, "learning_rate");
                       j["momentum"] = num(e.hyperparams.momentum, "momentum");
                       j["batch_size"] = e.hyperparams.batch_size;
                       j["committed"] = e.committed;
                   },
                   [&](const ev::StructureChanged& e) { j["layer_sizes"] = sizes_json(e.layer_sizes); },
                   [&](const ev::EvalResult& e) {
                       j["accuracy"] = num(e.metrics.accuracy, "accuracy");
                       j["loss"] = num(e.metrics.loss, "loss");
                   },
                   [&](const ev::Audio& e) {
                       j["left_freq"] = num(e.left_freq, "frequency");
                       j["right_freq"] = num(e.right_freq, "frequency");
                       if (e.left_extra)
                           j["left_extra_freq"] = num(*e.left_extra, "frequency");
                       if (e.right_extra)
                           j["right_extra_freq"] = num(*e.right_extra, "frequency");
                   },
                   [&](const ev::Error& e) {
                       j["code"] = e.code;
                       j["text"] = e.text;
                   },
               },
               body);
    return j;
}

json parse_object(std::string_view text)
{
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::exception& e) {
        bad(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object())
        bad("message must be a JSON object");
    return j;
}

ClientBody client_body(const json& j, const std::string& type)
{
    if (type == "hello_ack")
        return HelloAck{};
    if (type == "pause")
        return cmd::Pause{};
    if (type == "resume")
        return cmd::Resume{};
    if (type == "set_hyperparams")
        return cmd::SetHyperparams{get_double(j, "learning_rate"), get_double(j, "momentum")};
    if (type == "add_neuron")
        return cmd::AddNeuron{get_small_int(j, "layer"), get_vec3(j, "position")};
    if (type == "remove_neuron")
        return cmd::RemoveNeuron{get_small_int(j, "layer"), get_small_int(j, "node_id"), get_vec3(j, "position")};
    if (type == "drag_node")
        return cmd::DragNode{get_small_int(j, "node_id"), get_vec3(j, "position")};
    if (type == "release_node")
        return cmd::ReleaseNode{get_small_int(j, "node_id")};
    if (type == "set_sonification")
        return cmd::SetSonification{get_mode(j, "mode")};
    if (type == "evaluate_now")
        return cmd::EvaluateNow{};
    bad("unknown message type '" + type + "'");
}

std::string get_type(const json& j)
{
    return get_string(j, "type");
}

} // namespace

std::string_view type_tag(const ClientBody& body)
{
    return std::visit(overloaded{
                          [](const HelloAck&) { return "hello_ack"; },
                          [](const cmd::Pause&) { return "pause"; },
                          [](const cmd::Resume&) { return "resume"; },
                          [](const cmd::SetHyperparams&) { return "set_hyperparams"; },
                          [](const cmd::AddNeuron&) { return "add_neuron"; },
                          [](const cmd::RemoveNeuron&) { return "remove_neuron"; },
                          [](const cmd::DragNode&) { return "drag_node"; },
                          [](const cmd::ReleaseNode&) { return "release_node"; },
                          [](const cmd::SetSonification&) { return "set_sonification"; },
                          [](const cmd::EvaluateNow&) { return "evaluate_now"; },
                      },
                      body);
}

std::string_view type_tag(const ServerBody& body)
{
    return std::visit(overloaded{
                          [](const Hello&) { return "hello"; },
                          [](const ev::StateChanged&) { return "state"; },
                          [](const ev::EpochCompleted&) { return "epoch"; },
                          [](const ev::LayoutFrame&) { return "layout"; },
                          [](const ev::HyperparamsChanged&) { return "hyperparams"; },
                          [](const ev::StructureChanged&) { return "structure"; },
                          [](const ev::EvalResult&) { return "eval"; },
                          [](const ev::Audio&) { return "audio"; },
                          [](const ev::Error&) { return "error"; },
                      },
                      body);
}

ServerBody to_server_body(const Event& event)
{
    return std::visit([](const auto& e) -> ServerBody { return e; }, event);
}

std::optional<ClientBody> to_client_body(const Command& command)
{
    return std::visit(overloaded{
                          [](const cmd::Shutdown&) -> std::optional<ClientBody> { return std::nullopt; },
                          [](const auto& c) -> std::optional<ClientBody> { return ClientBody{c}; },
                      },
                      command);
}

std::optional<Command> to_command(const ClientBody& body)
{
    return std::visit(overloaded{
                          [](const HelloAck&) -> std::optional<Command> { return std::nullopt; },
                          [](const auto& c) -> std::optional<Command> { return Command{c}; },
                      },
                      body);
}

std::string encode(const ClientMessage& message)
{
    json j = client_json(message.body);
    if (message.seq)
        j["seq"] = *message.seq;
    return j.dump();
}

std::string encode(const ServerMessage& message)
{
    return EncodedBody(message.body).with_seq(message.seq);
}

EncodedBody::EncodedBody(const ServerBody& body) : tag_(type_tag(body))
{
    // Error text can echo client bytes; invalid UTF-8 becomes U+FFFD.
    const std::string s = server_json(body).dump(-1, ' ', false, json::error_handler_t::replace);
    // Drop the opening brace; with_seq puts "seq" in front.
    fields_ = s.substr(1);
}

std::string EncodedBody::with_seq(std::uint64_t seq) const
{
    std::string out = "{\"seq\":";
    out += std::to_string(seq);
    out += ',';
    out += fields_;
    return out;
}

ClientMessage decode_client(std::string_view text)
{
    const json j = parse_object(text);
    ClientMessage m;
    if (j.contains("seq"))
        m.seq = get_uint(j, "seq");
    m.body = client_body(j, get_type(j));
    return m;
}

ServerMessage decode_server(std::string_view text)
{
    const json j = parse_object(text);
    ServerMessage m;
    m.seq = get_uint(j, "seq");
    const std::string type = get_type(j);
    if (type == "hello") {
        Hello h;
        h.protocol_version = get_small_int(j, "protocol_version");
        h.layer_sizes = get_sizes(j, "layer_sizes");
        h.hyperparams = get_hyper(get_object(j, "hyperparams"));
        try {
            h.state = parse_session_state(get_string(j, "state"));
        } catch (const InvalidArgument& e) {
            bad(e.what());
        }
        const json& s = get_object(j, "sonification");
        h.sonification.mode = get_mode(s, "mode");
        const json& maps = get_object(s, "mappings");
        h.sonification.accuracy = get_mapping(get_object(maps, "accuracy"), SignalSource::Accuracy);
        h.sonification.loss = get_mapping(get_object(maps, "loss"), SignalSource::Loss);
        h.sonification.learning_rate = get_mapping(get_object(maps, "learning_rate"), SignalSource::LearningRate);
        h.sonification.momentum = get_mapping(get_object(maps, "momentum"), SignalSource::Momentum);
        m.body = h;
    } else if (type == "state") {
        try {
            m.body = ev::StateChanged{parse_session_state(get_string(j, "value"))};
        } catch (const InvalidArgument& e) {
            bad(e.what());
        }
    } else if (type == "epoch") {
        ev::EpochCompleted e;
        e.metrics.epoch = get_size(j, "epoch");
        e.metrics.val_accuracy = get_double(j, "accuracy");
        e.metrics.val_loss = get_double(j, "loss");
        e.hyperparams = get_hyper(get_object(j, "hyperparams"));
        e.weights = get_weights(get_object(j, "weights"));
        m.body = std::move(e);
    } else if (type == "layout") {
        ev::LayoutFrame f;
        for (const json& n : get_array(j, "nodes")) {
            if (!n.is_object())
                bad("layout nodes must be objects");
            f.snapshot.nodes.push_back({get_small_int(n, "id"), parse_kind(get_string(n, "kind")), get_vec3(n, "pos")});
        }
        for (const json& e : get_array(j, "edges")) {
            if (!e.is_object())
                bad("layout edges must be objects");
            f.snapshot.edges.push_back({get_small_int(e, "a"), get_small_int(e, "b"), get_double(e, "w")});
        }
        m.body = std::move(f);
    } else if (type == "hyperparams") {
        m.body = ev::HyperparamsChanged{get_hyper(j), get_bool(j, "committed")};
    } else if (type == "structure") {
        m.body = ev::StructureChanged{get_sizes(j, "layer_sizes")};
    } else if (type == "eval") {
        m.body = ev::EvalResult{EvalMetrics{get_double(j, "accuracy"), get_double(j, "loss")}};
    } else if (type == "audio") {
        ev::Audio a{get_double(j, "left_freq"), get_double(j, "right_freq"), std::nullopt, std::nullopt};
        if (j.contains("left_extra_freq"))
            a.left_extra = get_double(j, "left_extra_freq");
        if (j.contains("right_extra_freq"))
            a.right_extra = get_double(j, "right_extra_freq");
        m.body = a;
    } else if (type == "error") {
        m.body = ev::Error{get_string(j, "code"), get_string(j, "text")};
    } else {
        bad("unknown message type '" + type + "'");
    }
    return m;
}

std::vector<ScriptEntry> parse_script(std::istream& in)
{
    std::vector<ScriptEntry> out;
    std::string line;
    std::size_t lineno = 0;
    std::size_t last = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#')
            continue;
        try {
            const json j = parse_object(line);
            ScriptEntry e;
            e.at_step = get_size(j, "at_step");
            const json& c = get_object(j, "cmd");
            const std::string type = get_type(c);
            if (type == "shutdown") {
                e.cmd = cmd::Shutdown{};
            } else {
                const auto cmd = to_command(client_body(c, type));
                if (!cmd)
                    bad("'" + type + "' is not a command");
                e.cmd = *cmd;
            }
            if (e.at_step < last)
                bad("at_step values must be non-decreasing");
            last = e.at_step;
            out.push_back(std::move(e));
        } catch (const ProtocolError& err) {
            throw ProtocolError("script line " + std::to_string(lineno) + ": " + err.what());
        }
    }
    return out;
}

std::string encode_script_entry(const ScriptEntry& entry)
{
    json j;
    j["at_step"] = entry.at_step;
    if (std::holds_alternative<cmd::Shutdown>(entry.cmd))
        j["cmd"] = {{"type", "shutdown"}};
    else
        j["cmd"] = client_json(*to_client_body(entry.cmd));
    return j.dump();
}

std::string encode_frame(std::string_view body)
{
    if (body.size() > 0xFFFFFFFFull)
        throw InvalidArgument("frame body too large");
    const auto n = static_cast<std::uint32_t>(body.size());
    std::string out;
    out.reserve(4 + body.size());
    out.push_back(static_cast<char>(n >> 24));
    out.push_back(static_cast<char>(n >> 16));
    out.push_back(static_cast<char>(n >> 8));
    out.push_back(static_cast<char>(n));
    out.append(body);
    return out;
}

void FrameDecoder::feed(std::string_view bytes)
{
    if (dead_)
        return;
    if (pos_ > 0 && pos_ == buffer_.size()) {
        buffer_.clear();
        pos_ = 0;
    } else if (pos_ > 65536 && pos_ * 2 > buffer_.size()) {
        buffer_.erase(0, pos_);
        pos_ = 0;
    }
    buffer_.append(bytes);
}

std::optional<FrameDecoder::Frame> FrameDecoder::next()
{
    if (dead_ || buffered() < 4)
        return std::nullopt;
    const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data() + pos_);
    const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                            (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
    if (n > max_bytes_) {
        dead_ = true;
        buffer_.clear();
        pos_ = 0;
        return Frame{Frame::Kind::Oversize, {}};
    }
    if (n == 0) {
        pos_ += 4;
        return Frame{Frame::Kind::Empty, {}};
    }
    if (buffered() < 4 + std::size_t{n})
        return std::nullopt;
    Frame f{Frame::Kind::Body, buffer_.substr(pos_ + 4, n)};
    pos_ += 4 + n;
    return f;
}

} // namespace aiive::protocol
