#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "assign_surrogate/demand_paths.hpp"
#include "assign_surrogate/matrix.hpp"
#include "assign_surrogate/network.hpp"

namespace surrogate {

struct SimConfig {
    double sim_step = 1.0;   // seconds
    double interval = 10.0;  // aggregation step, seconds
    double horizon = 3600.0; // seconds

    std::size_t steps_per_interval() const;
    std::size_t intervals() const;
    std::size_t steps() const;
};

/// Throws ValidationError unless interval is an integer multiple of sim_step and
/// horizon an integer multiple of interval.
void validate(const SimConfig& cfg);

struct VehicleRecord {
    std::int64_t agent_id = 0;
    double departure = 0.0;
    double arrival = 0.0;  // meaningful only when finished
    double travel_time = 0.0;
    bool finished = false;
    bool operator==(const VehicleRecord&) const = default;
};

struct SimResult {
    std::vector<VehicleRecord> vehicles;
    IntMatrix flows;  // S x T, vehicles on edges (by from-node cell) at each interval start
    double total_travel_time = 0.0;
    std::size_t unfinished = 0;
    bool operator==(const SimResult&) const = default;
};

/// Partition of all agents at the end of one simulation step.
struct StepCounts {
    double time = 0.0;
    std::size_t not_departed = 0;
    std::size_t holding = 0;
    std::size_t on_edges = 0;
    std::size_t arrived = 0;
};
using StepObserver = std::function<void(const StepCounts&)>;

/// Vehicles per edge (dense edge index) at one interval boundary.
struct OccupancySnapshot {
    std::vector<std::int64_t> edge_vehicles;
};

/// Time-stepped spatial-queue simulation.
///
/// Each edge holds a traversing list (vehicle, earliest exit = entry + length /
/// speed) and a FIFO exit queue. Per step an edge gains outflow credit
/// capacity * sim_step, capped at max(1, capacity * sim_step); while the credit
/// is at least one and the head's next edge has free storage, the head moves
/// on. Vehicles that cannot enter their first edge wait in an origin holding
/// queue, which counts toward travel time but not toward the flow matrix.
/// Edges are processed in edge id order and simultaneous departures in agent id
/// order, so the result is a pure function of the inputs.
///
/// Times are tracked continuously: a vehicle that leaves at the first step
/// after its earliest exit keeps that exact exit time, so an uncongested trip
/// reproduces its free-flow time whenever every edge takes at least one step.
SimResult simulate(const RoadNetwork& net, const Demand& demand, const ChoiceSets& sets,
                   const Assignment& assignment, const CellMap& cmap, const SimConfig& cfg,
                   const StepObserver& observer = {});

/// Q[s][t] = vehicles whose current edge starts in cell s at boundary t.
IntMatrix aggregate_flows(const std::vector<OccupancySnapshot>& snapshots, const RoadNetwork& net,
                          const CellMap& cmap);

/// Sum of per-vehicle travel times (unfinished vehicles credited to the horizon).
double total_travel_time(const SimResult& result);

/// Runs independent simulations over `workers` threads; output order follows input.
std::vector<SimResult> simulate_batch(const RoadNetwork& net, const Demand& demand, const ChoiceSets& sets,
                                      const std::vector<Assignment>& assignments, const CellMap& cmap,
                                      const SimConfig& cfg, std::size_t workers);

/// Writes Q.csv, vehicles.csv and summary.csv into `dir`.
void save_sim_result(const SimResult& result, std::size_t sample_id, const std::filesystem::path& dir);
SimResult load_sim_result(const std::filesystem::path& dir);

}  // namespace surrogate
