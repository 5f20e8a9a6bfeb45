#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "assign_surrogate/matrix.hpp"
#include "assign_surrogate/network.hpp"

namespace surrogate {

struct Trip {
    std::int64_t agent_id = 0;
    NodeId origin = 0;
    NodeId destination = 0;
    double departure_time = 0.0;  // seconds
    bool operator==(const Trip&) const = default;
};

/// Fixed demand: trips indexed by agent id (contiguous from 0).
struct Demand {
    std::vector<Trip> trips;
    std::size_t size() const { return trips.size(); }
    bool operator==(const Demand&) const = default;
};

/// Checks ids are 0..n-1 in order and origin != destination.
void validate_demand(const Demand& demand);

using NodePath = std::vector<NodeId>;

/// Up to K candidate paths of one agent, in rank order. valid_mask has K
/// entries; valid_mask[k] is true iff paths.size() > k.
struct ChoiceSet {
    std::vector<NodePath> paths;
    std::vector<bool> valid_mask;
    bool operator==(const ChoiceSet&) const = default;
};
using ChoiceSets = std::vector<ChoiceSet>;

/// Per-agent selected rank into its choice set.
struct Assignment {
    std::vector<int> path_index;
    bool operator==(const Assignment&) const = default;
};

/// S x T counts plus the interval length. Column t sums, over agents departing
/// in interval t, the number of distinct cells on their selected path.
struct AssignmentMatrix {
    IntMatrix counts;
    double interval = 10.0;  // seconds
};

struct RankedPath {
    NodePath nodes;
    double cost = 0.0;  // free-flow seconds
};

/// Sum of free-flow times along a node path (fastest parallel edge per hop).
/// Throws ValidationError if two consecutive nodes are not connected.
double path_cost(const RoadNetwork& net, const NodePath& path);

/// Dense edge indices along a node path; throws ValidationError on a missing edge.
std::vector<std::size_t> path_edges(const RoadNetwork& net, const NodePath& path);

/// Yen's k shortest loopless paths by free-flow time. Ties (equal cost within
/// a relative 1e-9) are broken by lexicographic node sequence.
std::vector<RankedPath> k_shortest_paths(const RoadNetwork& net, NodeId origin, NodeId destination,
                                         std::size_t k);

/// Uniform distinct-node OD pairs (resampled while unreachable) with
/// departures uniform in [0, window). Deterministic in `seed`.
Demand gen_demand(const RoadNetwork& net, std::size_t n_agents, double window, std::uint64_t seed,
                  int max_retries = 1000);

ChoiceSets build_choice_sets(const RoadNetwork& net, const Demand& demand, std::size_t k);

/// Throws ValidationError unless every agent picks a valid rank.
void validate_assignment(const ChoiceSets& sets, const Assignment& assignment);

/// Distinct cells visited by a node path, ascending.
std::vector<std::size_t> path_cells(const NodePath& path, const CellMap& cmap);

AssignmentMatrix assignment_matrix(const Demand& demand, const ChoiceSets& sets, const Assignment& assignment,
                                   const CellMap& cmap, std::size_t intervals, double interval);

void save_demand(const Demand& demand, const std::filesystem::path& file);
Demand load_demand(const std::filesystem::path& file);

/// Records `agent_id;path_rank;node,node,...`, one per line.
void save_choice_sets(const ChoiceSets& sets, const std::filesystem::path& file);
ChoiceSets load_choice_sets(const std::filesystem::path& file, std::size_t n_agents, std::size_t k);

void save_assignment(const Assignment& assignment, const std::filesystem::path& file);
Assignment load_assignment(const std::filesystem::path& file);

}  // namespace surrogate
