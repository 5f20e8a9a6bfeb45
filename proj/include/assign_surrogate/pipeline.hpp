#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "assign_surrogate/dataset.hpp"
#include "assign_surrogate/demand_paths.hpp"
#include "assign_surrogate/network.hpp"
#include "assign_surrogate/rng.hpp"
#include "assign_surrogate/sampler.hpp"
#include "assign_surrogate/simulator.hpp"

namespace surrogate {

/// Stage seed derived from the root seed and the stage name.
inline std::uint64_t stage_seed(std::uint64_t root, std::string_view stage) {
    return derive_seed(root, fnv1a(stage));
}

struct ScenarioConfig {
    int rows = 5;
    int cols = 5;
    double edge_length = 200.0;  // m
    double speed = 10.0;         // m/s
    double capacity = 0.15;      // veh/s
    double hex_size = 200.0;     // m
    std::size_t agents = 200;
    double departure_window = 300.0;  // s
    std::size_t k = 4;
    SimConfig sim{1.0, 10.0, 600.0};
};

struct Scenario {
    RoadNetwork net;
    CellMap cmap;
    CellGraph graph;
    Demand demand;
    ChoiceSets sets;
    SimConfig sim;
};

/// Grid network, cell map, demand (seeded by the "demand" stage) and choice sets.
Scenario build_scenario(const ScenarioConfig& cfg, std::uint64_t root_seed);

/// Assignments for the planned grid samples, one per entry.
std::vector<Assignment> realize_assignments(const ChoiceSets& sets, const std::vector<SampleSpec>& plan,
                                            ZeroMass policy = ZeroMass::UniformOverValid);

/// Simulates every assignment and packs A, Q and TT per run; sim_id = plan sample_id.
std::vector<Run> simulate_runs(const Scenario& sc, const std::vector<SampleSpec>& plan,
                               const std::vector<Assignment>& assignments, std::size_t workers);

}  // namespace surrogate
