#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aiive/mlp.hpp"

namespace aiive {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3& operator+=(const Vec3& o)
    {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    Vec3& operator-=(const Vec3& o)
    {
        x -= o.x;
        y -= o.y;
        z -= o.z;
        return *this;
    }
    friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
    friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
    friend Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
    friend Vec3 operator*(double s, const Vec3& a) { return {s * a.x, s * a.y, s * a.z}; }
    friend Vec3 operator*(const Vec3& a, double s) { return s * a; }
    friend bool operator==(const Vec3&, const Vec3&) = default;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

enum class NodeKind { InputAggregate, Hidden1, Hidden2, OutputAggregate };

const char* to_string(NodeKind kind);

// Which pair of layers an edge joins; weights are normalized per group.
enum class EdgeGroup { InputHidden1 = 0, Hidden1Hidden2 = 1, Hidden2Output = 2 };

struct LayoutNode {
    int id = 0;
    NodeKind kind = NodeKind::Hidden1;
    Vec3 position;
    Vec3 velocity;
    bool pinned = false; // held by a drag; the integrator leaves it in place
};

struct LayoutEdge {
    int a = 0;
    int b = 0;
    EdgeGroup group = EdgeGroup::Hidden1Hidden2;
    double raw_weight = 0.0;
    double norm_weight = 0.0; // in [-1, 1]
};

struct LayoutParams {
    double k_a = 1.0;          // attraction coefficient
    double k_r = 1.0;          // repulsion coefficient
    double dt = 0.05;          // integration step
    double damping = 0.98;     // per-step velocity retention; 1 = no energy loss
    double max_speed = 10.0;   // |v| clamp
    double epsilon_dist = 1e-3;

    void validate() const;
};

// Force on `a` from an edge to `b`: magnitude k_a |w|, pointing at b,
// independent of distance. Zero when the nodes are closer than epsilon.
Vec3 attractive_force(const Vec3& a, const Vec3& b, double norm_weight, double k_a,
                      double epsilon_dist);

// Force on `i` from `j`: magnitude k_r / d^2 pointing away from j, with d
// floored at epsilon. Exactly coincident points are pushed along +x.
Vec3 repulsive_force(const Vec3& i, const Vec3& j, double k_r, double epsilon_dist);

// Same-layer peers attract as if joined by a unit weight.
inline Vec3 intra_layer_attraction(const Vec3& i, const Vec3& j, double k_a, double epsilon_dist)
{
    return attractive_force(i, j, 1.0, k_a, epsilon_dist);
}

// raw / max |raw| over the group, or all zeros when that max is zero.
std::vector<double> normalize_group(std::span<const double> raw);

// New raw weight after a drag moves an endpoint from distance d_old to d_new:
// raw * (d_old / d_new)^2, sign kept, distances floored at epsilon. This is
// the pair balance k_a |W| = k_r / d^2 solved for |W|.
double weight_from_drag(double raw, double d_old, double d_new, double epsilon_dist);

// Immutable copy handed to renderers and the wire protocol.
struct LayoutSnapshot {
    struct Node {
        int id;
        NodeKind kind;
        Vec3 position;
        friend bool operator==(const Node&, const Node&) = default;
    };
    struct Edge {
        int a;
        int b;
        double w; // norm_weight
        friend bool operator==(const Edge&, const Edge&) = default;
    };
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    friend bool operator==(const LayoutSnapshot&, const LayoutSnapshot&) = default;
};

// Force-directed graph mirroring an Mlp: one node per hidden neuron plus one
// aggregate node each for the input and output layers.
class LayoutGraph {
public:
    LayoutGraph() = default;

    // Positions seeded uniformly in the unit ball, velocities zero.
    static LayoutGraph build(const Mlp& net, std::uint64_t seed);

    // Arbitrary graph for physics experiments. Node ids must be unique;
    // edge weights are taken as given (norm_weight is not recomputed).
    static LayoutGraph from_parts(std::vector<LayoutNode> nodes, std::vector<LayoutEdge> edges);

    const std::vector<LayoutNode>& nodes() const { return nodes_; }
    const std::vector<LayoutEdge>& edges() const { return edges_; }

    bool contains(int id) const;
    const LayoutNode& node(int id) const;
    LayoutNode& node(int id);

    int input_node() const { return input_id_; }
    int output_node() const { return output_id_; }

    // Node ids of hidden layer `layer` (1 or 2), in neuron order.
    const std::vector<int>& hidden_nodes(int layer) const;
    // Which hidden layer (1 or 2) a node belongs to, 0 for the aggregates.
    int hidden_layer_of(int id) const;
    std::size_t neuron_index(int id) const;

    // Recomputes raw weights from the network and renormalizes. The network
    // must have the same hidden layer sizes as the graph.
    void sync_weights(const Mlp& net);

    // Replaces raw weights (edge order) and renormalizes per group.
    void set_raw_weights(std::span<const double> raw);

    // Appends a node for a neuron appended to hidden layer `layer`.
    int add_hidden_node(int layer, const Vec3& position);
    // Drops a hidden node; callers remove the matching neuron from the network.
    void remove_hidden_node(int id);

    void pin(int id, const Vec3& position);
    void unpin(int id);

    // One semi-implicit Euler step:
    //   v <- damping (v + dt F); |v| <= max_speed; p <- p + dt v
    // Throws NumericError naming the node pair if a force is not finite.
    void step(const LayoutParams& params);

    // Net force on every node, indexed like nodes().
    std::vector<Vec3> forces(const LayoutParams& params) const;

    Vec3 center_of_mass() const;
    // Mean position of hidden layer 1 or 2, or of an aggregate kind.
    Vec3 layer_center(NodeKind kind) const;

    // Edges touching a node, as indices into edges().
    std::vector<std::size_t> incident_edges(int id) const;

    LayoutSnapshot snapshot() const;

    // Number of nodes / edges the aggregation rule gives for a network.
    static std::size_t expected_nodes(const LayerSizes& sizes);
    static std::size_t expected_edges(const LayerSizes& sizes);

private:
    std::size_t index_of(int id) const;
    void rebuild_edges();

    std::vector<LayoutNode> nodes_;
    std::vector<LayoutEdge> edges_;
    std::vector<int> hidden1_;
    std::vector<int> hidden2_;
    int input_id_ = 0;
    int output_id_ = 1;
    int next_id_ = 0;
};

// Pure form of LayoutGraph::step.
LayoutGraph step(LayoutGraph graph, const LayoutParams& params);

} // namespace aiive
