#include <cmath>
#include <filesystem>

#include "assign_surrogate/error.hpp"
#include "assign_surrogate/simulator.hpp"
#include "doctest.h"
#include "scenarios.hpp"

using namespace surrogate;

namespace {

RoadNetwork line(int edges, double length, double speed, double capacity) {
    std::vector<Node> nodes;
    std::vector<Edge> es;
    for (int i = 0; i <= edges; ++i) nodes.push_back({i, i * length, 0});
    for (int i = 0; i < edges; ++i) es.push_back({i, i, i + 1, length, speed, capacity, default_storage(length)});
    return RoadNetwork(nodes, es);
}

double occupancy_integral(const SimResult& r, double dt) {
    return static_cast<double>(r.flows.total()) * dt;
}

}  // namespace

TEST_CASE("sim config validation") {
    CHECK_NOTHROW(validate(SimConfig{1, 10, 600}));
    CHECK_THROWS_AS(validate(SimConfig{3, 10, 600}), ValidationError);
    CHECK_THROWS_AS(validate(SimConfig{1, 10, 605}), ValidationError);
    CHECK_THROWS_AS(validate(SimConfig{0, 10, 600}), ValidationError);
}

TEST_CASE("empty system") {
    auto net = line(2, 100, 10, 1);
    CellMap cmap = build_cell_map(net, 1000);
    auto r = simulate(net, Demand{}, {}, Assignment{}, cmap, {1, 10, 100});
    CHECK(r.flows.rows() == 1);
    CHECK(r.flows.cols() == 10);
    CHECK(r.flows.total() == 0);
    CHECK(r.total_travel_time == 0);
    CHECK(total_travel_time(r) == 0);
}

TEST_CASE("single vehicle free flow") {
    auto net = line(2, 100, 10, 0.5);
    CellMap cmap = build_cell_map(net, 1000);
    Demand d{{{0, 0, 2, 0.0}}};
    ChoiceSets sets{{{{0, 1, 2}}, {true}}};
    auto r = simulate(net, d, sets, Assignment{{0}}, cmap, {1, 10, 100});
    REQUIRE(r.vehicles[0].finished);
    CHECK(std::abs(r.vehicles[0].travel_time - 20.0) <= 1.0);

    // On the network during [3.4, 23.4): seen at the 10 s and 20 s boundaries only.
    Demand late{{{0, 0, 2, 3.4}}};
    auto r2 = simulate(net, late, sets, Assignment{{0}}, cmap, {1, 10, 100});
    CHECK(std::abs(r2.vehicles[0].travel_time - 20.0) <= 1.0);
    CHECK(r2.flows(0, 0) == 0);
    CHECK(r2.flows(0, 1) == 1);
    CHECK(r2.flows(0, 2) == 1);
    CHECK(r2.flows(0, 3) == 0);
}

TEST_CASE("bottleneck discharge follows capacity") {
    auto net = line(1, 100, 10, 0.5);
    CellMap cmap = build_cell_map(net, 1000);
    Demand d;
    ChoiceSets sets;
    for (int a = 0; a < 10; ++a) {
        d.trips.push_back({a, 0, 1, 0.0});
        sets.push_back({{{0, 1}}, {true}});
    }
    auto r = simulate(net, d, sets, Assignment{std::vector<int>(10, 0)}, cmap, {1, 10, 200});
    for (int k = 0; k < 10; ++k) {
        REQUIRE(r.vehicles[k].finished);
        // Credit recursion: one exit per 1 / 0.5 = 2 s after the free-flow exit at 10 s.
        CHECK(r.vehicles[k].arrival == doctest::Approx(10.0 + 2.0 * k));
    }
    CHECK(r.vehicles[9].arrival - r.vehicles[0].arrival == doctest::Approx(18.0));
}

TEST_CASE("aggregate flows examples") {
    auto net = line(3, 100, 10, 1);
    CellMap cmap{4, {{0, 0}, {1, 3}, {2, 1}, {3, 2}}};
    std::vector<OccupancySnapshot> snaps(3, OccupancySnapshot{{0, 1, 0}});
    auto q = aggregate_flows(snaps, net, cmap);
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(q(3, t) == 1);
        CHECK(q.column_sum(t) == 1);
    }
    std::vector<OccupancySnapshot> empty(2, OccupancySnapshot{{0, 0, 0}});
    CHECK(aggregate_flows(empty, net, cmap).total() == 0);
}

TEST_CASE("total travel time sums vehicles") {
    SimResult r;
    r.vehicles = {{0, 0, 20, 20, true}, {1, 5, 40, 35, true}};
    CHECK(total_travel_time(r) == 55.0);
}

TEST_CASE("short horizon flags unfinished vehicles") {
    auto net = line(3, 200, 10, 1);
    CellMap cmap = build_cell_map(net, 1000);
    Demand d{{{0, 0, 3, 5.0}}};
    ChoiceSets sets{{{{0, 1, 2, 3}}, {true}}};
    auto r = simulate(net, d, sets, Assignment{{0}}, cmap, {1, 10, 30});
    CHECK(r.unfinished == 1);
    CHECK_FALSE(r.vehicles[0].finished);
    CHECK(r.total_travel_time == 25.0);
}

TEST_CASE("invalid paths are rejected") {
    auto net = line(2, 100, 10, 1);
    CellMap cmap = build_cell_map(net, 1000);
    Demand d{{{0, 0, 2, 0.0}}};
    ChoiceSets bad{{{{0, 2}}, {true}}};
    CHECK_THROWS_AS(simulate(net, d, bad, Assignment{{0}}, cmap, {1, 10, 100}), ValidationError);
    Demand beyond{{{0, 0, 2, 150.0}}};
    ChoiceSets ok{{{{0, 1, 2}}, {true}}};
    CHECK_THROWS_AS(simulate(net, beyond, ok, Assignment{{0}}, cmap, {1, 10, 100}), ValidationError);
}

TEST_CASE("conservation, identity and determinism on random scenarios") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = scenario::random_grid(seed);
        const std::size_t n = s.demand.size();
        bool partition_ok = true;
        auto r = simulate(s.net, s.demand, s.sets, s.assignment, s.cmap, s.cfg, [&](const StepCounts& c) {
            std::size_t departed = 0;
            for (const auto& t : s.demand.trips) departed += t.departure_time <= c.time;
            partition_ok &= c.not_departed + c.holding + c.on_edges + c.arrived == n;
            partition_ok &= c.not_departed == n - departed;
        });
        CHECK(partition_ok);
        CHECK(r.unfinished == 0);
        CHECK(std::abs(occupancy_integral(r, s.cfg.interval) - r.total_travel_time) <=
              2.0 * static_cast<double>(n) * s.cfg.interval);
        for (std::size_t t = 0; t < r.flows.cols(); ++t) CHECK(r.flows.column_sum(t) <= static_cast<std::int64_t>(n));
        for (std::size_t a = 0; a < n; ++a) {
            const double ff = path_cost(s.net, s.sets[a].paths[s.assignment.path_index[a]]);
            CHECK(r.vehicles[a].travel_time >= ff - s.cfg.sim_step);
        }
        CHECK(r == simulate(s.net, s.demand, s.sets, s.assignment, s.cmap, s.cfg));
    }
}

TEST_CASE("two-route bottleneck congestion is monotone") {
    auto net = scenario::two_route_bottleneck();
    auto demand = scenario::bottleneck_demand();
    auto sets = build_choice_sets(net, demand, 2);
    CellMap cmap = build_cell_map(net, 100);
    SimConfig cfg{1, 10, 3600};
    Assignment all_first{std::vector<int>(100, 0)};
    Assignment split;
    for (int a = 0; a < 100; ++a) split.path_index.push_back(a % 2);
    const double tt_all = simulate(net, demand, sets, all_first, cmap, cfg).total_travel_time;
    const double tt_split = simulate(net, demand, sets, split, cmap, cfg).total_travel_time;
    CHECK(tt_all >= tt_split);
}

TEST_CASE("batch simulation matches serial runs") {
    auto s = scenario::random_grid(3);
    std::vector<Assignment> as;
    for (std::uint64_t k = 0; k < 5; ++k) as.push_back(random_assignment(s.sets, k));
    auto serial = simulate_batch(s.net, s.demand, s.sets, as, s.cmap, s.cfg, 1);
    auto threaded = simulate_batch(s.net, s.demand, s.sets, as, s.cmap, s.cfg, 3);
    CHECK(serial == threaded);
}

TEST_CASE("sim result files round-trip") {
    auto s = scenario::random_grid(9);
    auto r = simulate(s.net, s.demand, s.sets, s.assignment, s.cmap, s.cfg);
    const auto dir = std::filesystem::temp_directory_path() / "surrogate_test_sim";
    save_sim_result(r, 4, dir);
    auto back = load_sim_result(dir);
    CHECK(back.flows == r.flows);
    CHECK(back.vehicles == r.vehicles);
    CHECK(back.total_travel_time == r.total_travel_time);
    std::filesystem::remove_all(dir);
}
