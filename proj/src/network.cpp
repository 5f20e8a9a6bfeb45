#include "assign_surrogate/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <sstream>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"

namespace surrogate {

namespace fs = std::filesystem;

std::int64_t default_storage(double length) {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(length / 7.5)));
}

RoadNetwork::RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!node_index_.emplace(nodes_[i].id, i).second) {
            throw ValidationError("duplicate node id " + std::to_string(nodes_[i].id));
        }
    }
    std::stable_sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const Edge& e = edges_[i];
        const std::string tag = "edge " + std::to_string(e.id);
        if (!edge_index_.emplace(e.id, i).second) throw ValidationError("duplicate " + tag);
        if (!node_index_.count(e.from) || !node_index_.count(e.to)) {
            throw ValidationError(tag + " references an unknown node");
        }
        if (e.from == e.to) throw ValidationError(tag + " is a self loop");
        if (!(e.length > 0) || !(e.free_flow_speed > 0) || !(e.capacity > 0)) {
            throw ValidationError(tag + " needs positive length, speed and capacity");
        }
        if (e.storage < 1) throw ValidationError(tag + " needs storage >= 1");
    }
    out_.assign(nodes_.size(), {});
    in_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        out_[node_index_.at(edges_[i].from)].push_back(i);
        in_[node_index_.at(edges_[i].to)].push_back(i);
    }
    for (auto& list : out_) {
        std::stable_sort(list.begin(), list.end(),
                         [this](std::size_t a, std::size_t b) { return edges_[a].to < edges_[b].to; });
    }
}

std::size_t RoadNetwork::node_index(NodeId id) const {
    auto it = node_index_.find(id);
    if (it == node_index_.end()) throw ValidationError("unknown node id " + std::to_string(id));
    return it->second;
}

std::optional<std::size_t> RoadNetwork::find_node(NodeId id) const {
    auto it = node_index_.find(id);
    if (it == node_index_.end()) return std::nullopt;
    return it->second;
}

std::size_t RoadNetwork::edge_index(EdgeId id) const {
    auto it = edge_index_.find(id);
    if (it == edge_index_.end()) throw ValidationError("unknown edge id " + std::to_string(id));
    return it->second;
}

std::optional<std::size_t> RoadNetwork::edge_between(NodeId from, NodeId to) const {
    auto u = find_node(from);
    if (!u) return std::nullopt;
    std::optional<std::size_t> best;
    for (std::size_t e : out_[*u]) {
        if (edges_[e].to != to) continue;
        if (!best || edges_[e].free_flow_time() < edges_[*best].free_flow_time()) best = e;
    }
    return best;
}

std::vector<bool> RoadNetwork::reachable_from(std::size_t src) const {
    std::vector<bool> seen(nodes_.size(), false);
    std::deque<std::size_t> frontier{src};
    seen[src] = true;
    while (!frontier.empty()) {
        const std::size_t u = frontier.front();
        frontier.pop_front();
        for (std::size_t e : out_[u]) {
            const std::size_t v = node_index_.at(edges_[e].to);
            if (!seen[v]) {
                seen[v] = true;
                frontier.push_back(v);
            }
        }
    }
    return seen;
}

RoadNetwork synth_grid_network(int rows, int cols, double edge_length, double speed, double capacity) {
    if (rows < 1 || cols < 1) throw ValidationError("grid needs rows >= 1 and cols >= 1");
    if (!(edge_length > 0) || !(speed > 0) || !(capacity > 0)) {
        throw ValidationError("grid edge length, speed and capacity must be positive");
    }
    std::vector<Node> nodes;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            nodes.push_back({static_cast<NodeId>(r * cols + c), c * edge_length, r * edge_length});
        }
    }
    std::vector<Edge> edges;
    const auto storage = default_storage(edge_length);
    auto link = [&](NodeId a, NodeId b) {
        edges.push_back({static_cast<EdgeId>(edges.size()), a, b, edge_length, speed, capacity, storage});
    };
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const NodeId id = r * cols + c;
            if (c + 1 < cols) {
                link(id, id + 1);
                link(id + 1, id);
            }
            if (r + 1 < rows) {
                link(id, id + cols);
                link(id + cols, id);
            }
        }
    }
    return RoadNetwork(std::move(nodes), std::move(edges));
}

std::size_t CellMap::cell_of(NodeId node) const {
    auto it = node_to_cell.find(node);
    if (it == node_to_cell.end()) throw ValidationError("node " + std::to_string(node) + " has no cell");
    return it->second;
}

HexCoord hex_of(double x, double y, double hex_size) {
    // Fractional axial coordinates, then cube rounding.
    const double q = (std::sqrt(3.0) / 3.0 * x - y / 3.0) / hex_size;
    const double r = (2.0 / 3.0 * y) / hex_size;
    const double s = -q - r;
    double rq = std::round(q), rr = std::round(r), rs = std::round(s);
    const double dq = std::abs(rq - q), dr = std::abs(rr - r), ds = std::abs(rs - s);
    if (dq > dr && dq > ds) {
        rq = -rr - rs;
    } else if (dr > ds) {
        rr = -rq - rs;
    }
    return {static_cast<std::int64_t>(rq), static_cast<std::int64_t>(rr)};
}

std::int64_t hex_distance(HexCoord a, HexCoord b) {
    const std::int64_t dq = a.q - b.q, dr = a.r - b.r;
    return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) / 2;
}

CellMap build_cell_map(const RoadNetwork& net, double hex_size) {
    if (!(hex_size > 0)) throw ValidationError("hex_size must be positive");
    std::map<HexCoord, std::size_t> occupied;
    std::vector<HexCoord> node_hex;
    node_hex.reserve(net.node_count());
    for (const Node& n : net.nodes()) {
        node_hex.push_back(hex_of(n.x, n.y, hex_size));
        occupied.emplace(node_hex.back(), 0);
    }
    std::size_t next = 0;
    for (auto& [hex, idx] : occupied) idx = next++;
    CellMap cmap;
    cmap.cell_count = occupied.size();
    for (std::size_t i = 0; i < net.node_count(); ++i) {
        cmap.node_to_cell[net.nodes()[i].id] = occupied.at(node_hex[i]);
    }
    return cmap;
}

CellGraph build_cell_graph(const RoadNetwork& net, const CellMap& cmap) {
    const std::size_t s = cmap.cell_count;
    RealMatrix raw(s, s, 0.0);
    for (std::size_t i = 0; i < s; ++i) raw(i, i) = 1.0;
    for (const Edge& e : net.edges()) {
        raw(cmap.cell_of(e.to), cmap.cell_of(e.from)) = 1.0;
    }
    for (std::size_t i = 0; i < s; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < s; ++j) sum += raw(i, j);
        for (std::size_t j = 0; j < s; ++j) raw(i, j) /= sum;
    }
    return CellGraph{std::move(raw)};
}

std::vector<std::size_t> edge_cells(const RoadNetwork& net, const CellMap& cmap) {
    std::vector<std::size_t> cells;
    cells.reserve(net.edge_count());
    for (const Edge& e : net.edges()) cells.push_back(cmap.cell_of(e.from));
    return cells;
}

void save_network(const RoadNetwork& net, const fs::path& dir) {
    std::ostringstream nodes;
    nodes << "node_id,x,y\n";
    for (const Node& n : net.nodes()) nodes << n.id << ',' << csv::format(n.x) << ',' << csv::format(n.y) << '\n';
    std::ostringstream edges;
    edges << "edge_id,from,to,length,speed,capacity,storage\n";
    for (const Edge& e : net.edges()) {
        edges << e.id << ',' << e.from << ',' << e.to << ',' << csv::format(e.length) << ','
              << csv::format(e.free_flow_speed) << ',' << csv::format(e.capacity) << ',' << e.storage << '\n';
    }
    csv::write_text(dir / "nodes.csv", nodes.str());
    csv::write_text(dir / "edges.csv", edges.str());
}

RoadNetwork load_network(const fs::path& dir) {
    const auto nt = csv::read(dir / "nodes.csv");
    const auto ci = nt.column("node_id"), cx = nt.column("x"), cy = nt.column("y");
    std::vector<Node> nodes;
    for (const auto& row : nt.rows) {
        nodes.push_back({csv::to_int(row[ci], nt.source), csv::to_double(row[cx], nt.source),
                         csv::to_double(row[cy], nt.source)});
    }
    const auto et = csv::read(dir / "edges.csv");
    const auto ei = et.column("edge_id"), ef = et.column("from"), eto = et.column("to"),
               el = et.column("length"), es = et.column("speed"), ec = et.column("capacity");
    std::optional<std::size_t> est;
    for (std::size_t i = 0; i < et.header.size(); ++i) {
        if (et.header[i] == "storage") est = i;
    }
    std::vector<Edge> edges;
    for (const auto& row : et.rows) {
        Edge e;
        e.id = csv::to_int(row[ei], et.source);
        e.from = csv::to_int(row[ef], et.source);
        e.to = csv::to_int(row[eto], et.source);
        e.length = csv::to_double(row[el], et.source);
        e.free_flow_speed = csv::to_double(row[es], et.source);
        e.capacity = csv::to_double(row[ec], et.source);
        e.storage = (est && !row[*est].empty()) ? csv::to_int(row[*est], et.source) : default_storage(e.length);
        edges.push_back(e);
    }
    return RoadNetwork(std::move(nodes), std::move(edges));
}

void save_cell_map(const RoadNetwork& net, const CellMap& cmap, const fs::path& file) {
    std::ostringstream out;
    out << "node_id,cell\n";
    for (const Node& n : net.nodes()) out << n.id << ',' << cmap.cell_of(n.id) << '\n';
    csv::write_text(file, out.str());
}

CellMap load_cell_map(const fs::path& file) {
    const auto t = csv::read(file);
    const auto ci = t.column("node_id"), cc = t.column("cell");
    CellMap cmap;
    for (const auto& row : t.rows) {
        const auto cell = csv::to_int(row[cc], t.source);
        if (cell < 0) throw LoadError(t.source + ": negative cell index");
        cmap.node_to_cell[csv::to_int(row[ci], t.source)] = static_cast<std::size_t>(cell);
        cmap.cell_count = std::max(cmap.cell_count, static_cast<std::size_t>(cell) + 1);
    }
    std::vector<bool> used(cmap.cell_count, false);
    for (const auto& [node, cell] : cmap.node_to_cell) used[cell] = true;
    if (std::find(used.begin(), used.end(), false) != used.end()) {
        throw LoadError(t.source + ": cell indices are not dense");
    }
    return cmap;
}

}  // namespace surrogate
