#include "assign_surrogate/demand_paths.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <sstream>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"
#include "assign_surrogate/rng.hpp"

namespace surrogate {

namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool nearly_equal(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

/// (cost, lexicographic node sequence) order with a relative tie tolerance.
bool ranked_before(const RankedPath& a, const RankedPath& b) {
    if (!nearly_equal(a.cost, b.cost)) return a.cost < b.cost;
    return a.nodes < b.nodes;
}

/// Graph restricted for one spur search: removed node indices and removed
/// (from, to) node hops.
struct Restriction {
    std::vector<bool> node_removed;
    std::set<std::pair<std::size_t, std::size_t>> hop_removed;
};

/// Lexicographically smallest shortest path src -> dst under `res`, as node indices.
std::optional<std::vector<std::size_t>> lexmin_shortest(const RoadNetwork& net, std::size_t src, std::size_t dst,
                                                        const Restriction& res) {
    const std::size_t n = net.node_count();
    const auto& edges = net.edges();
    auto to_idx = [&](std::size_t e) { return net.node_index(edges[e].to); };
    auto from_idx = [&](std::size_t e) { return net.node_index(edges[e].from); };
    auto usable = [&](std::size_t u, std::size_t v) {
        return !res.node_removed[u] && !res.node_removed[v] && !res.hop_removed.count({u, v});
    };

    // Distances to dst on the reversed graph.
    std::vector<double> dist(n, kInf);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[dst] = 0.0;
    heap.push({0.0, dst});
    while (!heap.empty()) {
        auto [d, v] = heap.top();
        heap.pop();
        if (d > dist[v]) continue;
        for (std::size_t e : net.in_edges(v)) {
            const std::size_t u = from_idx(e);
            if (!usable(u, v)) continue;
            const double nd = d + edges[e].free_flow_time();
            if (nd < dist[u]) {
                dist[u] = nd;
                heap.push({nd, u});
            }
        }
    }
    if (dist[src] == kInf) return std::nullopt;

    std::vector<std::size_t> path{src};
    std::size_t u = src;
    while (u != dst) {
        std::optional<std::size_t> next;
        NodeId best_id = 0;
        for (std::size_t e : net.out_edges(u)) {
            const std::size_t v = to_idx(e);
            if (!usable(u, v) || dist[v] == kInf) continue;
            if (!nearly_equal(dist[u], edges[e].free_flow_time() + dist[v])) continue;
            if (!next || edges[e].to < best_id) {
                next = v;
                best_id = edges[e].to;
            }
        }
        if (!next) return std::nullopt;  // only reachable through tolerance noise
        u = *next;
        path.push_back(u);
    }
    return path;
}

NodePath to_ids(const RoadNetwork& net, const std::vector<std::size_t>& idx) {
    NodePath p;
    p.reserve(idx.size());
    for (std::size_t i : idx) p.push_back(net.nodes()[i].id);
    return p;
}

}  // namespace

void validate_demand(const Demand& demand) {
    for (std::size_t i = 0; i < demand.trips.size(); ++i) {
        const Trip& t = demand.trips[i];
        if (t.agent_id != static_cast<std::int64_t>(i)) {
            throw ValidationError("agent ids must be contiguous from 0; found " + std::to_string(t.agent_id) +
                                  " at position " + std::to_string(i));
        }
        if (t.origin == t.destination) throw ValidationError("agent " + std::to_string(i) + " has origin == destination");
        if (!(t.departure_time >= 0)) throw ValidationError("agent " + std::to_string(i) + " has negative departure");
    }
}

double path_cost(const RoadNetwork& net, const NodePath& path) {
    double cost = 0.0;
    for (std::size_t e : path_edges(net, path)) cost += net.edges()[e].free_flow_time();
    return cost;
}

std::vector<std::size_t> path_edges(const RoadNetwork& net, const NodePath& path) {
    std::vector<std::size_t> out;
    if (path.size() < 2) throw ValidationError("path needs at least two nodes");
    out.reserve(path.size() - 1);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        auto e = net.edge_between(path[i], path[i + 1]);
        if (!e) {
            throw ValidationError("no edge from node " + std::to_string(path[i]) + " to node " +
                                  std::to_string(path[i + 1]));
        }
        out.push_back(*e);
    }
    return out;
}

std::vector<RankedPath> k_shortest_paths(const RoadNetwork& net, NodeId origin, NodeId destination, std::size_t k) {
    std::vector<RankedPath> found;
    if (k == 0 || origin == destination) return found;
    const std::size_t src = net.node_index(origin);
    const std::size_t dst = net.node_index(destination);

    Restriction none{std::vector<bool>(net.node_count(), false), {}};
    auto first = lexmin_shortest(net, src, dst, none);
    if (!first) return found;
    std::vector<std::vector<std::size_t>> accepted{*first};
    found.push_back({to_ids(net, *first), 0.0});
    found.back().cost = path_cost(net, found.back().nodes);

    std::vector<std::pair<RankedPath, std::vector<std::size_t>>> candidates;
    while (found.size() < k) {
        const auto& prev = accepted.back();
        for (std::size_t i = 0; i + 1 < prev.size(); ++i) {
            Restriction res{std::vector<bool>(net.node_count(), false), {}};
            for (std::size_t j = 0; j < i; ++j) res.node_removed[prev[j]] = true;
            for (const auto& p : accepted) {
                if (p.size() > i + 1 && std::equal(prev.begin(), prev.begin() + i + 1, p.begin())) {
                    res.hop_removed.insert({p[i], p[i + 1]});
                }
            }
            auto spur = lexmin_shortest(net, prev[i], dst, res);
            if (!spur) continue;
            std::vector<std::size_t> total(prev.begin(), prev.begin() + i);
            total.insert(total.end(), spur->begin(), spur->end());
            const bool known =
                std::any_of(candidates.begin(), candidates.end(), [&](const auto& c) { return c.second == total; });
            if (known) continue;
            RankedPath rp{to_ids(net, total), 0.0};
            rp.cost = path_cost(net, rp.nodes);
            candidates.emplace_back(std::move(rp), std::move(total));
        }
        if (candidates.empty()) break;
        auto best = std::min_element(candidates.begin(), candidates.end(),
                                     [](const auto& a, const auto& b) { return ranked_before(a.first, b.first); });
        found.push_back(best->first);
        accepted.push_back(best->second);
        candidates.erase(best);
    }
    return found;
}

Demand gen_demand(const RoadNetwork& net, std::size_t n_agents, double window, std::uint64_t seed, int max_retries) {
    if (n_agents < 1) throw ValidationError("n_agents must be >= 1");
    if (!(window > 0)) throw ValidationError("demand window must be positive");
    if (net.node_count() < 2) throw ValidationError("demand needs at least two nodes");
    Rng rng(seed);
    std::vector<std::optional<std::vector<bool>>> reach(net.node_count());
    Demand demand;
    demand.trips.reserve(n_agents);
    const std::size_t n = net.node_count();
    for (std::size_t a = 0; a < n_agents; ++a) {
        std::size_t o = 0, d = 0;
        bool ok = false;
        for (int attempt = 0; attempt <= max_retries && !ok; ++attempt) {
            o = rng.below(n);
            d = rng.below(n - 1);
            if (d >= o) ++d;
            if (!reach[o]) reach[o] = net.reachable_from(o);
            ok = (*reach[o])[d];
        }
        if (!ok) {
            throw RuntimeFailure("demand generation: retry budget exhausted for agent " + std::to_string(a) +
                                 "; last OD pair " + std::to_string(net.nodes()[o].id) + " -> " +
                                 std::to_string(net.nodes()[d].id) + " is unreachable");
        }
        const double dep = rng.uniform(0.0, window);
        demand.trips.push_back({static_cast<std::int64_t>(a), net.nodes()[o].id, net.nodes()[d].id, dep});
    }
    return demand;
}

ChoiceSets build_choice_sets(const RoadNetwork& net, const Demand& demand, std::size_t k) {
    if (k < 1) throw ValidationError("choice set size K must be >= 1");
    validate_demand(demand);
    ChoiceSets sets;
    sets.reserve(demand.size());
    for (const Trip& t : demand.trips) {
        auto ranked = k_shortest_paths(net, t.origin, t.destination, k);
        if (ranked.empty()) {
            throw RuntimeFailure("agent " + std::to_string(t.agent_id) + ": no path from node " +
                                 std::to_string(t.origin) + " to node " + std::to_string(t.destination));
        }
        ChoiceSet cs;
        cs.valid_mask.assign(k, false);
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            cs.paths.push_back(std::move(ranked[i].nodes));
            cs.valid_mask[i] = true;
        }
        sets.push_back(std::move(cs));
    }
    return sets;
}

void validate_assignment(const ChoiceSets& sets, const Assignment& assignment) {
    if (assignment.path_index.size() != sets.size()) {
        throw ValidationError("assignment has " + std::to_string(assignment.path_index.size()) +
                              " agents, choice sets have " + std::to_string(sets.size()));
    }
    for (std::size_t a = 0; a < sets.size(); ++a) {
        const int k = assignment.path_index[a];
        if (k < 0 || static_cast<std::size_t>(k) >= sets[a].valid_mask.size() || !sets[a].valid_mask[k]) {
            throw ValidationError("agent " + std::to_string(a) + " selects invalid path rank " + std::to_string(k));
        }
    }
}

std::vector<std::size_t> path_cells(const NodePath& path, const CellMap& cmap) {
    std::vector<std::size_t> cells;
    cells.reserve(path.size());
    for (NodeId n : path) cells.push_back(cmap.cell_of(n));
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    return cells;
}

AssignmentMatrix assignment_matrix(const Demand& demand, const ChoiceSets& sets, const Assignment& assignment,
                                   const CellMap& cmap, std::size_t intervals, double interval) {
    if (!(interval > 0)) throw ValidationError("interval length must be positive");
    validate_assignment(sets, assignment);
    if (demand.size() != sets.size()) throw ValidationError("demand and choice sets disagree on agent count");
    AssignmentMatrix am{IntMatrix(cmap.cell_count, intervals, 0), interval};
    const double horizon = static_cast<double>(intervals) * interval;
    for (std::size_t a = 0; a < demand.size(); ++a) {
        const double dep = demand.trips[a].departure_time;
        if (!(dep < horizon)) {
            throw ValidationError("agent " + std::to_string(a) + " departs at " + csv::format(dep) +
                                  " s, beyond the " + csv::format(horizon) + " s horizon");
        }
        const auto t = static_cast<std::size_t>(std::floor(dep / interval));
        for (std::size_t s : path_cells(sets[a].paths[assignment.path_index[a]], cmap)) am.counts(s, t) += 1;
    }
    return am;
}

void save_demand(const Demand& demand, const fs::path& file) {
    std::ostringstream out;
    out << "agent_id,origin,destination,departure_s\n";
    for (const Trip& t : demand.trips) {
        out << t.agent_id << ',' << t.origin << ',' << t.destination << ',' << csv::format(t.departure_time) << '\n';
    }
    csv::write_text(file, out.str());
}

Demand load_demand(const fs::path& file) {
    const auto t = csv::read(file);
    const auto ca = t.column("agent_id"), co = t.column("origin"), cd = t.column("destination"),
               cdep = t.column("departure_s");
    Demand d;
    for (const auto& row : t.rows) {
        d.trips.push_back({csv::to_int(row[ca], t.source), csv::to_int(row[co], t.source),
                           csv::to_int(row[cd], t.source), csv::to_double(row[cdep], t.source)});
    }
    validate_demand(d);
    return d;
}

void save_choice_sets(const ChoiceSets& sets, const fs::path& file) {
    std::ostringstream out;
    for (std::size_t a = 0; a < sets.size(); ++a) {
        for (std::size_t r = 0; r < sets[a].paths.size(); ++r) {
            out << a << ';' << r << ';';
            const auto& p = sets[a].paths[r];
            for (std::size_t i = 0; i < p.size(); ++i) out << (i ? "," : "") << p[i];
            out << '\n';
        }
    }
    csv::write_text(file, out.str());
}

ChoiceSets load_choice_sets(const fs::path& file, std::size_t n_agents, std::size_t k) {
    std::ifstream in(file);
    if (!in) throw LoadError(file.string() + ": cannot open file");
    const std::string source = file.string();
    ChoiceSets sets(n_agents);
    for (auto& cs : sets) cs.valid_mask.assign(k, false);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto parts = csv::split(line, ';');
        if (parts.size() != 3) throw LoadError(source + ": malformed record on line " + std::to_string(lineno));
        const auto a = csv::to_int(parts[0], source);
        const auto r = csv::to_int(parts[1], source);
        if (a < 0 || static_cast<std::size_t>(a) >= n_agents || r < 0 || static_cast<std::size_t>(r) >= k) {
            throw LoadError(source + ": agent/rank out of range on line " + std::to_string(lineno));
        }
        auto& cs = sets[a];
        if (static_cast<std::size_t>(r) != cs.paths.size()) {
            throw LoadError(source + ": ranks of agent " + std::to_string(a) + " are not consecutive");
        }
        NodePath p;
        for (const auto& f : csv::split(parts[2], ',')) p.push_back(csv::to_int(f, source));
        cs.paths.push_back(std::move(p));
        cs.valid_mask[r] = true;
    }
    for (std::size_t a = 0; a < n_agents; ++a) {
        if (sets[a].paths.empty()) throw LoadError(source + ": agent " + std::to_string(a) + " has no paths");
    }
    return sets;
}

void save_assignment(const Assignment& assignment, const fs::path& file) {
    std::ostringstream out;
    out << "agent_id,path_index\n";
    for (std::size_t a = 0; a < assignment.path_index.size(); ++a) out << a << ',' << assignment.path_index[a] << '\n';
    csv::write_text(file, out.str());
}

Assignment load_assignment(const fs::path& file) {
    const auto t = csv::read(file);
    const auto ca = t.column("agent_id"), cp = t.column("path_index");
    Assignment as;
    for (const auto& row : t.rows) {
        if (csv::to_int(row[ca], t.source) != static_cast<long long>(as.path_index.size())) {
            throw LoadError(t.source + ": agent ids must be contiguous from 0");
        }
        as.path_index.push_back(static_cast<int>(csv::to_int(row[cp], t.source)));
    }
    return as;
}

}  // namespace surrogate
