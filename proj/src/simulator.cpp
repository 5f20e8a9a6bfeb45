#include "assign_surrogate/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"

namespace surrogate {

namespace {

std::size_t exact_ratio(double num, double den, const char* what) {
    const double r = num / den;
    const double rounded = std::round(r);
    if (!(rounded >= 1) || std::abs(r - rounded) > 1e-9 * std::max(1.0, r)) {
        throw ValidationError(std::string(what));
    }
    return static_cast<std::size_t>(rounded);
}

struct Vehicle {
    std::vector<std::size_t> edges;
    std::size_t position = 0;  // index into edges of the current edge
    double earliest_exit = 0.0;
};

struct EdgeState {
    std::deque<std::size_t> traversing;  // sorted by earliest exit
    std::deque<std::size_t> exit_queue;
    std::deque<std::size_t> holding;     // origin queue for vehicles starting here
    double credit = 0.0;
    std::int64_t occupancy = 0;          // traversing + exit queue
};

}  // namespace

std::size_t SimConfig::steps_per_interval() const {
    return exact_ratio(interval, sim_step, "aggregation interval must be a positive integer multiple of sim_step");
}

std::size_t SimConfig::intervals() const {
    return exact_ratio(horizon, interval, "horizon must be a positive integer multiple of the aggregation interval");
}

std::size_t SimConfig::steps() const { return steps_per_interval() * intervals(); }

void validate(const SimConfig& cfg) {
    if (!(cfg.sim_step > 0) || !(cfg.interval > 0) || !(cfg.horizon > 0)) {
        throw ValidationError("sim_step, interval and horizon must be positive");
    }
    (void)cfg.steps_per_interval();
    (void)cfg.intervals();
}

SimResult simulate(const RoadNetwork& net, const Demand& demand, const ChoiceSets& sets, const Assignment& assignment,
                   const CellMap& cmap, const SimConfig& cfg, const StepObserver& observer) {
    validate(cfg);
    validate_demand(demand);
    validate_assignment(sets, assignment);
    if (sets.size() != demand.size()) throw ValidationError("demand and choice sets disagree on agent count");

    const std::size_t n = demand.size();
    const double dt = cfg.sim_step;
    const std::size_t per_interval = cfg.steps_per_interval();
    const std::size_t intervals = cfg.intervals();
    const std::size_t steps = per_interval * intervals;
    const auto& edges = net.edges();

    std::vector<Vehicle> vehicles(n);
    for (std::size_t a = 0; a < n; ++a) {
        const auto& trip = demand.trips[a];
        if (!(trip.departure_time < cfg.horizon)) {
            throw ValidationError("agent " + std::to_string(a) + " departs after the simulation horizon");
        }
        const auto& path = sets[a].paths[assignment.path_index[a]];
        if (path.front() != trip.origin || path.back() != trip.destination) {
            throw ValidationError("agent " + std::to_string(a) + ": selected path does not connect its OD pair");
        }
        vehicles[a].edges = path_edges(net, path);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return demand.trips[x].departure_time < demand.trips[y].departure_time;
    });

    std::vector<EdgeState> state(edges.size());
    std::vector<double> credit_cap(edges.size()), credit_gain(edges.size()), travel(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        credit_gain[e] = edges[e].capacity * dt;
        credit_cap[e] = std::max(1.0, credit_gain[e]);
        state[e].credit = credit_cap[e];
        travel[e] = edges[e].free_flow_time();
    }

    SimResult result;
    result.vehicles.resize(n);
    for (std::size_t a = 0; a < n; ++a) {
        result.vehicles[a].agent_id = static_cast<std::int64_t>(a);
        result.vehicles[a].departure = demand.trips[a].departure_time;
    }

    // A move at step `now` keeps the vehicle's exact time if it happens at the
    // first step on or after that time; otherwise the move is delayed to `now`.
    auto effective = [dt](double exact, double now) { return (now - exact < dt) ? exact : now; };

    auto enter = [&](std::size_t v, std::size_t e, double entry) {
        vehicles[v].earliest_exit = entry + travel[e];
        auto& tr = state[e].traversing;
        auto pos = tr.end();
        while (pos != tr.begin() && vehicles[*(pos - 1)].earliest_exit > vehicles[v].earliest_exit) --pos;
        tr.insert(pos, v);
        ++state[e].occupancy;
    };

    std::vector<OccupancySnapshot> snapshots;
    snapshots.reserve(intervals);
    std::vector<std::size_t> holding_edges;  // edges with a non-empty origin queue
    std::size_t next_departure = 0, holding = 0, on_edges = 0, arrived = 0;

    for (std::size_t step = 0; step < steps; ++step) {
        const double now = static_cast<double>(step) * dt;
        if (step % per_interval == 0) {
            OccupancySnapshot snap;
            snap.edge_vehicles.resize(edges.size());
            for (std::size_t e = 0; e < edges.size(); ++e) snap.edge_vehicles[e] = state[e].occupancy;
            snapshots.push_back(std::move(snap));
        }

        for (std::size_t e = 0; e < edges.size(); ++e) {
            auto& st = state[e];
            st.credit = std::min(st.credit + credit_gain[e], credit_cap[e]);
            while (!st.traversing.empty() && vehicles[st.traversing.front()].earliest_exit <= now) {
                st.exit_queue.push_back(st.traversing.front());
                st.traversing.pop_front();
            }
        }

        for (std::size_t e = 0; e < edges.size(); ++e) {
            auto& st = state[e];
            while (st.credit >= 1.0 && !st.exit_queue.empty()) {
                const std::size_t v = st.exit_queue.front();
                Vehicle& veh = vehicles[v];
                const double t_move = effective(veh.earliest_exit, now);
                if (veh.position + 1 == veh.edges.size()) {
                    auto& rec = result.vehicles[v];
                    rec.arrival = t_move;
                    rec.travel_time = t_move - rec.departure;
                    rec.finished = true;
                    --on_edges;
                    ++arrived;
                } else {
                    const std::size_t next = veh.edges[veh.position + 1];
                    if (state[next].occupancy >= edges[next].storage) break;
                    ++veh.position;
                    enter(v, next, t_move);
                }
                st.exit_queue.pop_front();
                --st.occupancy;
                st.credit -= 1.0;
            }
        }

        while (next_departure < n && demand.trips[order[next_departure]].departure_time <= now) {
            const std::size_t v = order[next_departure++];
            const std::size_t first = vehicles[v].edges.front();
            if (state[first].holding.empty()) holding_edges.push_back(first);
            state[first].holding.push_back(v);
            ++holding;
        }
        if (!holding_edges.empty()) {
            std::sort(holding_edges.begin(), holding_edges.end());
            for (std::size_t e : holding_edges) {
                auto& st = state[e];
                while (!st.holding.empty() && st.occupancy < edges[e].storage) {
                    const std::size_t v = st.holding.front();
                    st.holding.pop_front();
                    enter(v, e, effective(demand.trips[v].departure_time, now));
                    --holding;
                    ++on_edges;
                }
            }
            std::erase_if(holding_edges, [&](std::size_t e) { return state[e].holding.empty(); });
        }

        if (observer) observer({now, n - next_departure, holding, on_edges, arrived});
    }

    for (auto& rec : result.vehicles) {
        if (!rec.finished) {
            rec.travel_time = cfg.horizon - rec.departure;
            ++result.unfinished;
        }
    }
    result.flows = aggregate_flows(snapshots, net, cmap);
    result.total_travel_time = total_travel_time(result);
    return result;
}

IntMatrix aggregate_flows(const std::vector<OccupancySnapshot>& snapshots, const RoadNetwork& net,
                          const CellMap& cmap) {
    const auto cells = edge_cells(net, cmap);
    IntMatrix q(cmap.cell_count, snapshots.size(), 0);
    for (std::size_t t = 0; t < snapshots.size(); ++t) {
        const auto& counts = snapshots[t].edge_vehicles;
        if (counts.size() != cells.size()) throw ValidationError("snapshot does not match the network's edge count");
        for (std::size_t e = 0; e < counts.size(); ++e) q(cells[e], t) += counts[e];
    }
    return q;
}

double total_travel_time(const SimResult& result) {
    double tt = 0.0;
    for (const auto& v : result.vehicles) tt += v.travel_time;
    return tt;
}

std::vector<SimResult> simulate_batch(const RoadNetwork& net, const Demand& demand, const ChoiceSets& sets,
                                      const std::vector<Assignment>& assignments, const CellMap& cmap,
                                      const SimConfig& cfg, std::size_t workers) {
    std::vector<SimResult> out(assignments.size());
    workers = std::max<std::size_t>(1, std::min(workers, assignments.size()));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < assignments.size(); i = next++) {
            try {
                out[i] = simulate(net, demand, sets, assignments[i], cmap, cfg);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

void save_sim_result(const SimResult& result, std::size_t sample_id, const std::filesystem::path& dir) {
    csv::write_int_matrix(dir / "Q.csv", result.flows);
    std::ostringstream veh;
    veh << "agent_id,departure_s,arrival_s,travel_time_s,finished\n";
    for (const auto& v : result.vehicles) {
        veh << v.agent_id << ',' << csv::format(v.departure) << ',' << (v.finished ? csv::format(v.arrival) : "")
            << ',' << csv::format(v.travel_time) << ',' << (v.finished ? 1 : 0) << '\n';
    }
    csv::write_text(dir / "vehicles.csv", veh.str());
    std::ostringstream sum;
    sum << "sample_id,TT_s,TT_min\n"
        << sample_id << ',' << csv::format(result.total_travel_time) << ','
        << csv::format(result.total_travel_time / 60.0) << '\n';
    csv::write_text(dir / "summary.csv", sum.str());
}

SimResult load_sim_result(const std::filesystem::path& dir) {
    SimResult r;
    r.flows = csv::read_int_matrix(dir / "Q.csv");
    const auto t = csv::read(dir / "vehicles.csv");
    const auto ca = t.column("agent_id"), cd = t.column("departure_s"), car = t.column("arrival_s"),
               ct = t.column("travel_time_s"), cf = t.column("finished");
    for (const auto& row : t.rows) {
        VehicleRecord v;
        v.agent_id = csv::to_int(row[ca], t.source);
        v.departure = csv::to_double(row[cd], t.source);
        v.finished = csv::to_int(row[cf], t.source) != 0;
        if (v.finished) v.arrival = csv::to_double(row[car], t.source);
        v.travel_time = csv::to_double(row[ct], t.source);
        if (!v.finished) ++r.unfinished;
        r.vehicles.push_back(v);
    }
    const auto s = csv::read(dir / "summary.csv");
    if (s.rows.empty()) throw LoadError(s.source + ": no summary row");
    r.total_travel_time = csv::to_double(s.rows.front()[s.column("TT_s")], s.source);
    return r;
}

}  // namespace surrogate
