#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <unordered_map>
#include <vector>

#include "assign_surrogate/matrix.hpp"

namespace surrogate {

using NodeId = std::int64_t;
using EdgeId = std::int64_t;

struct Node {
    NodeId id = 0;
    double x = 0.0;  // meters
    double y = 0.0;  // meters
};

struct Edge {
    EdgeId id = 0;
    NodeId from = 0;
    NodeId to = 0;
    double length = 0.0;           // meters
    double free_flow_speed = 0.0;  // m/s
    double capacity = 0.0;         // veh/s
    std::int64_t storage = 1;      // vehicles

    double free_flow_time() const { return length / free_flow_speed; }
};

/// Default storage: one vehicle per 7.5 m of jam spacing, at least one.
std::int64_t default_storage(double length);

/// Directed road graph. Validated on construction and immutable afterwards.
/// Nodes and edges keep their input order; dense indices are positions in
/// nodes() / edges(), and edges are additionally sorted by edge id so that the
/// dense edge index order equals edge_id order.
class RoadNetwork {
public:
    RoadNetwork() = default;
    RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges);

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    std::size_t node_index(NodeId id) const;
    std::optional<std::size_t> find_node(NodeId id) const;
    std::size_t edge_index(EdgeId id) const;

    /// Dense indices of edges leaving node index `u`, ascending by target node id.
    const std::vector<std::size_t>& out_edges(std::size_t u) const { return out_[u]; }
    const std::vector<std::size_t>& in_edges(std::size_t v) const { return in_[v]; }

    /// Fastest edge (then lowest id) from -> to, as a dense index.
    std::optional<std::size_t> edge_between(NodeId from, NodeId to) const;

    /// Breadth-first reachability from node index `src`.
    std::vector<bool> reachable_from(std::size_t src) const;

private:
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::unordered_map<NodeId, std::size_t> node_index_;
    std::unordered_map<EdgeId, std::size_t> edge_index_;
    std::vector<std::vector<std::size_t>> out_;
    std::vector<std::vector<std::size_t>> in_;
};

/// rows x cols lattice, node id = r * cols + c at (c * edge_length, r * edge_length),
/// bidirectional edges between orthogonal neighbours.
RoadNetwork synth_grid_network(int rows, int cols, double edge_length, double speed, double capacity);

/// Node -> cell partition with cells numbered densely 0..S-1.
struct CellMap {
    std::size_t cell_count = 0;
    std::unordered_map<NodeId, std::size_t> node_to_cell;

    std::size_t cell_of(NodeId node) const;
    bool operator==(const CellMap&) const = default;
};

/// Axial coordinates of the pointy-top hexagon (circumradius `hex_size`)
/// containing (x, y).
struct HexCoord {
    std::int64_t q = 0;
    std::int64_t r = 0;
    auto operator<=>(const HexCoord&) const = default;
};
HexCoord hex_of(double x, double y, double hex_size);
std::int64_t hex_distance(HexCoord a, HexCoord b);

/// Bins node coordinates into hexagons; occupied hexes are numbered in (q, r)
/// lexicographic order.
CellMap build_cell_map(const RoadNetwork& net, double hex_size);

/// Row-normalised one-hop cell adjacency with self loops:
/// raw[i][j] = 1 if i == j or an edge runs from a node of cell j to a node of cell i.
struct CellGraph {
    RealMatrix adjacency;
    std::size_t size() const { return adjacency.rows(); }
};
CellGraph build_cell_graph(const RoadNetwork& net, const CellMap& cmap);

/// Cell of each edge (the from-node's cell), indexed by dense edge index.
std::vector<std::size_t> edge_cells(const RoadNetwork& net, const CellMap& cmap);

void save_network(const RoadNetwork& net, const std::filesystem::path& dir);
RoadNetwork load_network(const std::filesystem::path& dir);
void save_cell_map(const RoadNetwork& net, const CellMap& cmap, const std::filesystem::path& file);
CellMap load_cell_map(const std::filesystem::path& file);

}  // namespace surrogate
