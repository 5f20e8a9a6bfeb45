#include "assign_surrogate/pipeline.hpp"

#include "assign_surrogate/error.hpp"

namespace surrogate {

Scenario build_scenario(const ScenarioConfig& cfg, std::uint64_t root_seed) {
    validate(cfg.sim);
    Scenario sc;
    sc.net = synth_grid_network(cfg.rows, cfg.cols, cfg.edge_length, cfg.speed, cfg.capacity);
    sc.cmap = build_cell_map(sc.net, cfg.hex_size);
    sc.graph = build_cell_graph(sc.net, sc.cmap);
    sc.demand = gen_demand(sc.net, cfg.agents, cfg.departure_window, stage_seed(root_seed, "demand"));
    sc.sets = build_choice_sets(sc.net, sc.demand, cfg.k);
    sc.sim = cfg.sim;
    return sc;
}

std::vector<Assignment> realize_assignments(const ChoiceSets& sets, const std::vector<SampleSpec>& plan,
                                            ZeroMass policy) {
    std::vector<Assignment> out;
    out.reserve(plan.size());
    for (const auto& s : plan) out.push_back(sample_assignment(sets, s.point, s.seed, policy));
    return out;
}

std::vector<Run> simulate_runs(const Scenario& sc, const std::vector<SampleSpec>& plan,
                               const std::vector<Assignment>& assignments, std::size_t workers) {
    if (plan.size() != assignments.size()) throw ValidationError("simulate: plan and assignments differ in length");
    const auto results = simulate_batch(sc.net, sc.demand, sc.sets, assignments, sc.cmap, sc.sim, workers);
    std::vector<Run> runs;
    runs.reserve(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto a = assignment_matrix(sc.demand, sc.sets, assignments[i], sc.cmap, sc.sim.intervals(),
                                         sc.sim.interval);
        runs.push_back({static_cast<std::int64_t>(plan[i].sample_id), a.counts, results[i].flows,
                        results[i].total_travel_time});
    }
    return runs;
}

}  // namespace surrogate
