#include "aiive/layout.hpp"

#include <algorithm>
#include <string>

#include "aiive/error.hpp"
#include "aiive/rng.hpp"

namespace aiive {

const char* to_string(NodeKind kind)
{
    switch (kind) {
    case NodeKind::InputAggregate:
        return "input";
    case NodeKind::Hidden1:
        return "hidden1";
    case NodeKind::Hidden2:
        return "hidden2";
    case NodeKind::OutputAggregate:
        return "output";
    }
    return "unknown";
}

void LayoutParams::validate() const
{
    if (!(k_a > 0.0) || !(k_r > 0.0) || !(dt > 0.0) || !(max_speed > 0.0) ||
        !(epsilon_dist > 0.0))
        throw InvalidArgument("layout params: k_a, k_r, dt, max_speed, epsilon_dist must be > 0");
    if (!(damping >= 0.0 && damping <= 1.0))
        throw InvalidArgument("layout params: damping must lie in [0, 1]");
}

Vec3 attractive_force(const Vec3& a, const Vec3& b, double norm_weight, double k_a,
                      double epsilon_dist)
{
    const Vec3 delta = b - a;
    const double d = delta.norm();
    if (d < epsilon_dist)
        return {};
    return (k_a * std::abs(norm_weight) / d) * delta;
}

Vec3 repulsive_force(const Vec3& i, const Vec3& j, double k_r, double epsilon_dist)
{
    const Vec3 delta = i - j;
    const double d = delta.norm();
    const double floored = std::max(d, epsilon_dist);
    const double magnitude = k_r / (floored * floored);
    if (d == 0.0)
        return {magnitude, 0.0, 0.0};
    return (magnitude / d) * delta;
}

std::vector<double> normalize_group(std::span<const double> raw)
{
    double peak = 0.0;
    for (double w : raw)
        peak = std::max(peak, std::abs(w));
    std::vector<double> out(raw.size(), 0.0);
    if (peak == 0.0)
        return out;
    for (std::size_t i = 0; i < raw.size(); ++i)
        out[i] = raw[i] / peak;
    return out;
}

double weight_from_drag(double raw, double d_old, double d_new, double epsilon_dist)
{
    const double ratio = std::max(d_old, epsilon_dist) / std::max(d_new, epsilon_dist);
    return raw * ratio * ratio;
}

std::size_t LayoutGraph::expected_nodes(const LayerSizes& sizes)
{
    return 2 + sizes[1] + sizes[2];
}

std::size_t LayoutGraph::expected_edges(const LayerSizes& sizes)
{
    return sizes[1] + sizes[1] * sizes[2] + sizes[2];
}

LayoutGraph LayoutGraph::build(const Mlp& net, std::uint64_t seed)
{
    Rng rng(seed);
    auto in_unit_ball = [&rng] {
        for (;;) {
            const Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            if (p.norm() <= 1.0)
                return p;
        }
    };

    LayoutGraph g;
    const LayerSizes sizes = net.sizes();
    auto add = [&](NodeKind kind) {
        const int id = g.next_id_++;
        g.nodes_.push_back({id, kind, in_unit_ball(), {}, false});
        return id;
    };
    g.input_id_ = add(NodeKind::InputAggregate);
    g.output_id_ = add(NodeKind::OutputAggregate);
    for (std::size_t i = 0; i < sizes[1]; ++i)
        g.hidden1_.push_back(add(NodeKind::Hidden1));
    for (std::size_t i = 0; i < sizes[2]; ++i)
        g.hidden2_.push_back(add(NodeKind::Hidden2));
    g.sync_weights(net);
    return g;
}

LayoutGraph LayoutGraph::from_parts(std::vector<LayoutNode> nodes, std::vector<LayoutEdge> edges)
{
    LayoutGraph g;
    std::sort(nodes.begin(), nodes.end(),
              [](const LayoutNode& a, const LayoutNode& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < nodes.size(); ++i)
        if (nodes[i].id == nodes[i - 1].id)
            throw InvalidArgument("duplicate layout node id " + std::to_string(nodes[i].id));
    g.nodes_ = std::move(nodes);
    g.input_id_ = g.output_id_ = -1;
    for (const LayoutNode& n : g.nodes_) {
        if (n.kind == NodeKind::Hidden1)
            g.hidden1_.push_back(n.id);
        else if (n.kind == NodeKind::Hidden2)
            g.hidden2_.push_back(n.id);
        else if (n.kind == NodeKind::InputAggregate)
            g.input_id_ = n.id;
        else
            g.output_id_ = n.id;
    }
    for (const LayoutEdge& e : edges) {
        if (e.a == e.b)
            throw InvalidArgument("layout edge must join two distinct nodes");
        g.index_of(e.a);
        g.index_of(e.b);
    }
    g.edges_ = std::move(edges);
    g.next_id_ = g.nodes_.empty() ? 0 : g.nodes_.back().id + 1;
    return g;
}

std::size_t LayoutGraph::index_of(int id) const
{
    // Nodes stay sorted by id: ids only grow and removal preserves order.
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                               [](const LayoutNode& n, int v) { return n.id < v; });
    if (it == nodes_.end() || it->id != id)
        throw InvalidArgument("no layout node with id " + std::to_string(id));
    return static_cast<std::size_t>(it - nodes_.begin());
}

bool LayoutGraph::contains(int id) const
{
    return std::any_of(nodes_.begin(), nodes_.end(), [id](const LayoutNode& n) { return n.id == id; });
}

const LayoutNode& LayoutGraph::node(int id) const { return nodes_[index_of(id)]; }
LayoutNode& LayoutGraph::node(int id) { return nodes_[index_of(id)]; }

const std::vector<int>& LayoutGraph::hidden_nodes(int layer) const
{
    if (layer == 1)
        return hidden1_;
    if (layer == 2)
        return hidden2_;
    throw InvalidArgument("hidden layer must be 1 or 2");
}

int LayoutGraph::hidden_layer_of(int id) const
{
    switch (node(id).kind) {
    case NodeKind::Hidden1:
        return 1;
    case NodeKind::Hidden2:
        return 2;
    default:
        return 0;
    }
}

std::size_t LayoutGraph::neuron_index(int id) const
{
    const int layer = hidden_layer_of(id);
    if (layer == 0)
        throw InvalidArgument("node " + std::to_string(id) + " is not a hidden neuron");
    const auto& ids = hidden_nodes(layer);
    return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
}

void LayoutGraph::rebuild_edges()
{
    edges_.clear();
    for (int h1 : hidden1_)
        edges_.push_back({input_id_, h1, EdgeGroup::InputHidden1, 0.0, 0.0});
    for (int h2 : hidden2_)
        for (int h1 : hidden1_)
            edges_.push_back({h1, h2, EdgeGroup::Hidden1Hidden2, 0.0, 0.0});
    for (int h2 : hidden2_)
        edges_.push_back({h2, output_id_, EdgeGroup::Hidden2Output, 0.0, 0.0});
}

void LayoutGraph::sync_weights(const Mlp& net)
{
    const LayerSizes sizes = net.sizes();
    if (sizes[1] != hidden1_.size() || sizes[2] != hidden2_.size())
        throw ShapeError("layout graph does not match the network's hidden layer sizes");
    if (edges_.size() != expected_edges(sizes))
        rebuild_edges();

    std::vector<double> raw;
    raw.reserve(edges_.size());
    // Aggregate norms accumulate in long double: a 2304-term row summed in
    // double drifts by tens of ulps, enough to break scale invariance.
    const Matrix& w1 = net.layer(0).weight;
    for (std::size_t j = 0; j < w1.rows(); ++j) {
        long double ss = 0.0L;
        for (double v : w1.row(j))
            ss += static_cast<long double>(v) * v;
        raw.push_back(static_cast<double>(std::sqrt(ss)));
    }
    for (double v : net.layer(1).weight.flat())
        raw.push_back(v);
    const Matrix& w3 = net.layer(2).weight;
    for (std::size_t c = 0; c < w3.cols(); ++c) {
        long double ss = 0.0L;
        for (std::size_t r = 0; r < w3.rows(); ++r)
            ss += static_cast<long double>(w3(r, c)) * w3(r, c);
        raw.push_back(static_cast<double>(std::sqrt(ss)));
    }
    set_raw_weights(raw);
}

void LayoutGraph::set_raw_weights(std::span<const double> raw)
{
    if (raw.size() != edges_.size())
        throw ShapeError("set_raw_weights: " + std::to_string(raw.size()) + " weights for " +
                         std::to_string(edges_.size()) + " edges");
    for (int g = 0; g < 3; ++g) {
        std::vector<std::size_t> members;
        std::vector<double> values;
        for (std::size_t e = 0; e < edges_.size(); ++e)
            if (static_cast<int>(edges_[e].group) == g) {
                members.push_back(e);
                values.push_back(raw[e]);
            }
        const auto norms = normalize_group(values);
        for (std::size_t k = 0; k < members.size(); ++k) {
            edges_[members[k]].raw_weight = values[k];
            edges_[members[k]].norm_weight = norms[k];
        }
    }
}

int LayoutGraph::add_hidden_node(int layer, const Vec3& position)
{
    if (layer != 1 && layer != 2)
        throw InvalidArgument("hidden layer must be 1 or 2");
    if (!position.finite())
        throw NumericError("add_hidden_node: non-finite position");
    auto& ids = layer == 1 ? hidden1_ : hidden2_;
    const int id = next_id_++;
    nodes_.push_back({id, layer == 1 ? NodeKind::Hidden1 : NodeKind::Hidden2, position, {}, false});
    ids.push_back(id);
    rebuild_edges();
    return id;
}

void LayoutGraph::remove_hidden_node(int id)
{
    const int layer = hidden_layer_of(id);
    if (layer == 0)
        throw InvalidArgument("node " + std::to_string(id) + " is not a hidden neuron");
    auto& ids = layer == 1 ? hidden1_ : hidden2_;
    if (ids.size() <= 1)
        throw InvalidArgument("cannot remove the last neuron of a hidden layer");
    ids.erase(std::find(ids.begin(), ids.end(), id));
    nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(index_of(id)));
    rebuild_edges();
}

void LayoutGraph::pin(int id, const Vec3& position)
{
    if (!position.finite())
        throw NumericError("pin: non-finite position");
    LayoutNode& n = node(id);
    n.position = position;
    n.velocity = {};
    n.pinned = true;
}

void LayoutGraph::unpin(int id) { node(id).pinned = false; }

std::vector<Vec3> LayoutGraph::forces(const LayoutParams& params) const
{
    std::vector<Vec3> f(nodes_.size());
    auto apply = [&](std::size_t i, std::size_t j, const Vec3& force) {
        if (!force.finite())
            throw NumericError("non-finite force between nodes " + std::to_string(nodes_[i].id) +
                               " and " + std::to_string(nodes_[j].id));
        f[i] += force;
        f[j] -= force;
    };

    for (std::size_t i = 0; i < nodes_.size(); ++i)
        for (std::size_t j = i + 1; j < nodes_.size(); ++j) {
            apply(i, j,
                  repulsive_force(nodes_[i].position, nodes_[j].position, params.k_r,
                                  params.epsilon_dist));
            const NodeKind k = nodes_[i].kind;
            if ((k == NodeKind::Hidden1 || k == NodeKind::Hidden2) && nodes_[j].kind == k)
                apply(i, j,
                      intra_layer_attraction(nodes_[i].position, nodes_[j].position, params.k_a,
                                             params.epsilon_dist));
        }

    for (const LayoutEdge& e : edges_) {
        const std::size_t ia = index_of(e.a);
        const std::size_t ib = index_of(e.b);
        apply(ia, ib,
              attractive_force(nodes_[ia].position, nodes_[ib].position, e.norm_weight, params.k_a,
                               params.epsilon_dist));
    }
    return f;
}

void LayoutGraph::step(const LayoutParams& params)
{
    const std::vector<Vec3> f = forces(params);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        LayoutNode& n = nodes_[i];
        if (n.pinned) {
            n.velocity = {};
            continue;
        }
        n.velocity = params.damping * (n.velocity + params.dt * f[i]);
        const double speed = n.velocity.norm();
        if (speed > params.max_speed)
            n.velocity = (params.max_speed / speed) * n.velocity;
        n.position += params.dt * n.velocity;
    }
}

Vec3 LayoutGraph::center_of_mass() const
{
    Vec3 sum;
    for (const LayoutNode& n : nodes_)
        sum += n.position;
    return (1.0 / static_cast<double>(nodes_.size())) * sum;
}

Vec3 LayoutGraph::layer_center(NodeKind kind) const
{
    Vec3 sum;
    std::size_t count = 0;
    for (const LayoutNode& n : nodes_)
        if (n.kind == kind) {
            sum += n.position;
            ++count;
        }
    if (count == 0)
        throw InvalidArgument(std::string("no nodes of kind ") + to_string(kind));
    return (1.0 / static_cast<double>(count)) * sum;
}

std::vector<std::size_t> LayoutGraph::incident_edges(int id) const
{
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < edges_.size(); ++e)
        if (edges_[e].a == id || edges_[e].b == id)
            out.push_back(e);
    return out;
}

LayoutSnapshot LayoutGraph::snapshot() const
{
    LayoutSnapshot s;
    s.nodes.reserve(nodes_.size());
    for (const LayoutNode& n : nodes_)
        s.nodes.push_back({n.id, n.kind, n.position});
    s.edges.reserve(edges_.size());
    for (const LayoutEdge& e : edges_)
        s.edges.push_back({e.a, e.b, e.norm_weight});
    return s;
}

LayoutGraph step(LayoutGraph graph, const LayoutParams& params)
{
    graph.step(params);
    return graph;
}

} // namespace aiive
