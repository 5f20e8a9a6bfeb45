#include <filesystem>
#include <set>

#include "assign_surrogate/demand_paths.hpp"
#include "assign_surrogate/error.hpp"
#include "assign_surrogate/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace surrogate;

namespace {

RoadNetwork triangle() {
    // o=0, m=1, d=2: direct 5 s, via m 2 + 2 s.
    return RoadNetwork({{0, 0, 0}, {1, 1, 1}, {2, 2, 0}},
                       {{0, 0, 2, 5, 1, 1, 1}, {1, 0, 1, 2, 1, 1, 1}, {2, 1, 2, 2, 1, 1, 1}});
}

}  // namespace

TEST_CASE("demand generation") {
    auto net = synth_grid_network(1, 2, 100, 10, 0.5);
    CHECK_THROWS_AS(gen_demand(net, 0, 60, 1), ValidationError);

    RoadNetwork one_way({{0, 0, 0}, {1, 1, 0}}, {{0, 0, 1, 10, 1, 1, 1}});
    auto d = gen_demand(one_way, 1, 60, 7);
    REQUIRE(d.size() == 1);
    CHECK(d.trips[0].origin == 0);
    CHECK(d.trips[0].destination == 1);
    CHECK(d.trips[0].departure_time >= 0);
    CHECK(d.trips[0].departure_time < 60);

    auto grid = synth_grid_network(4, 4, 100, 10, 0.5);
    auto a = gen_demand(grid, 300, 600, 42);
    auto b = gen_demand(grid, 300, 600, 42);
    CHECK(a == b);
    CHECK_FALSE(a == gen_demand(grid, 300, 600, 43));
    for (const auto& t : a.trips) {
        CHECK(t.origin != t.destination);
        CHECK(t.departure_time < 600);
    }

    const auto dir = std::filesystem::temp_directory_path() / "surrogate_test_demand";
    save_demand(a, dir / "demand.csv");
    CHECK(load_demand(dir / "demand.csv") == a);
    std::filesystem::remove_all(dir);
}

TEST_CASE("demand generation fails on unreachable pairs") {
    // Two disconnected components: every OD pair across them is unreachable
    // and within components there is no edge back.
    RoadNetwork isolated({{0, 0, 0}, {1, 1, 0}, {2, 5, 0}}, {});
    CHECK_THROWS_AS(gen_demand(isolated, 3, 60, 1, 20), RuntimeFailure);
}

TEST_CASE("yen on a triangle") {
    auto net = triangle();
    auto paths = k_shortest_paths(net, 0, 2, 2);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].nodes == NodePath{0, 1, 2});
    CHECK(paths[0].cost == doctest::Approx(4));
    CHECK(paths[1].nodes == NodePath{0, 2});
    CHECK(paths[1].cost == doctest::Approx(5));

    Demand demand{{{0, 0, 2, 0.0}}};
    auto sets = build_choice_sets(net, demand, 4);
    REQUIRE(sets.size() == 1);
    CHECK(sets[0].paths.size() == 2);
    CHECK(sets[0].valid_mask == std::vector<bool>{true, true, false, false});
}

TEST_CASE("choice sets fail on disconnected OD") {
    RoadNetwork net({{0, 0, 0}, {1, 1, 0}}, {{0, 0, 1, 10, 1, 1, 1}});
    Demand demand{{{0, 1, 0, 0.0}}};
    CHECK_THROWS_WITH_AS(build_choice_sets(net, demand, 2), doctest::Contains("agent 0"), RuntimeFailure);
}

TEST_CASE("yen matches exhaustive enumeration on random graphs") {
    int compared = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed * 31 + 7);
        const std::size_t n = 3 + rng.below(8);
        auto net = oracle::random_graph(seed, n, 0.35);
        const NodeId o = 0, d = static_cast<NodeId>(n - 1);
        auto expect = oracle::all_loopless_paths(net, o, d);
        auto got = k_shortest_paths(net, o, d, 4);
        REQUIRE(got.size() == std::min<std::size_t>(4, expect.size()));
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].nodes == expect[i].nodes);
            CHECK(got[i].cost == doctest::Approx(expect[i].cost));
        }
        for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i].cost >= got[i - 1].cost - 1e-9);
        for (const auto& p : got) {
            CHECK(std::set<NodeId>(p.nodes.begin(), p.nodes.end()).size() == p.nodes.size());
        }
        compared += !expect.empty();
    }
    CHECK(compared > 50);
}

TEST_CASE("grid ties are broken lexicographically") {
    auto net = synth_grid_network(3, 3, 100, 10, 1);
    auto paths = k_shortest_paths(net, 0, 8, 4);
    REQUIRE(paths.size() == 4);
    CHECK(paths[0].nodes == NodePath{0, 1, 2, 5, 8});
    CHECK(paths[1].nodes == NodePath{0, 1, 4, 5, 8});
    CHECK(paths[2].nodes == NodePath{0, 1, 4, 7, 8});
    CHECK(paths[3].nodes == NodePath{0, 3, 4, 5, 8});
}

TEST_CASE("assignment matrix examples") {
    // Cells: node 0 -> 0, node 1 -> 2, node 2 -> 4 (cells 1, 3 exist elsewhere).
    RoadNetwork net({{0, 0, 0}, {1, 1, 0}, {2, 2, 0}, {3, 3, 0}, {4, 4, 0}},
                    {{0, 0, 1, 10, 1, 1, 5}, {1, 1, 2, 10, 1, 1, 5}, {2, 3, 2, 10, 1, 1, 5}, {3, 2, 4, 10, 1, 1, 5}});
    CellMap cmap{5, {{0, 0}, {1, 2}, {2, 4}, {3, 1}, {4, 3}}};

    Demand empty;
    auto am0 = assignment_matrix(empty, {}, Assignment{}, cmap, 6, 10);
    CHECK(am0.counts.total() == 0);
    CHECK(am0.counts.rows() == 5);
    CHECK(am0.counts.cols() == 6);

    Demand one{{{0, 0, 1, 35.0}}};
    ChoiceSets sets1{{{{0, 1}}, {true}}};
    auto am1 = assignment_matrix(one, sets1, Assignment{{0}}, cmap, 6, 10);
    CHECK(am1.counts(0, 3) == 1);
    CHECK(am1.counts(2, 3) == 1);
    CHECK(am1.counts.total() == 2);

    Demand two{{{0, 0, 2, 12.0}, {1, 3, 4, 17.0}}};
    ChoiceSets sets2{{{{0, 1, 2}}, {true}}, {{{3, 2, 4}}, {true}}};
    auto am2 = assignment_matrix(two, sets2, Assignment{{0, 0}}, cmap, 6, 10);
    CHECK(am2.counts(4, 1) == 2);
    CHECK(am2.counts == oracle::per_vehicle_assignment_matrix(two, sets2, Assignment{{0, 0}}, cmap, 6, 10));

    Demand late{{{0, 0, 1, 60.0}}};
    CHECK_THROWS_AS(assignment_matrix(late, sets1, Assignment{{0}}, cmap, 6, 10), ValidationError);
}

TEST_CASE("assignment matrix equals per-vehicle construction") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        auto net = synth_grid_network(2 + static_cast<int>(rng.below(3)), 2 + static_cast<int>(rng.below(3)), 100, 10, 1);
        auto cmap = build_cell_map(net, rng.uniform(50, 250));
        auto demand = gen_demand(net, 1 + rng.below(40), 300, seed);
        auto sets = build_choice_sets(net, demand, 3);
        Assignment as;
        for (const auto& cs : sets) as.path_index.push_back(static_cast<int>(rng.below(cs.paths.size())));
        auto am = assignment_matrix(demand, sets, as, cmap, 30, 10);
        CHECK(am.counts == oracle::per_vehicle_assignment_matrix(demand, sets, as, cmap, 30, 10));

        std::int64_t distinct = 0;
        for (std::size_t a = 0; a < demand.size(); ++a) {
            distinct += static_cast<std::int64_t>(path_cells(sets[a].paths[as.path_index[a]], cmap).size());
        }
        CHECK(am.counts.total() == distinct);

        // Changing one agent's rank only touches its departure column.
        const std::size_t agent = rng.below(demand.size());
        if (sets[agent].paths.size() > 1) {
            Assignment other = as;
            other.path_index[agent] = (as.path_index[agent] + 1) % static_cast<int>(sets[agent].paths.size());
            auto am2 = assignment_matrix(demand, sets, other, cmap, 30, 10);
            const auto col = static_cast<std::size_t>(demand.trips[agent].departure_time / 10);
            for (std::size_t s = 0; s < am.counts.rows(); ++s) {
                for (std::size_t t = 0; t < am.counts.cols(); ++t) {
                    if (t != col) CHECK(am.counts(s, t) == am2.counts(s, t));
                }
            }
        }
    }
}

TEST_CASE("choice set and assignment files") {
    auto net = synth_grid_network(3, 3, 100, 10, 1);
    auto demand = gen_demand(net, 20, 100, 3);
    auto sets = build_choice_sets(net, demand, 4);
    const auto dir = std::filesystem::temp_directory_path() / "surrogate_test_paths";
    save_choice_sets(sets, dir / "choice_sets.txt");
    CHECK(load_choice_sets(dir / "choice_sets.txt", demand.size(), 4) == sets);
    Assignment as;
    for (std::size_t i = 0; i < sets.size(); ++i) as.path_index.push_back(static_cast<int>(i % sets[i].paths.size()));
    save_assignment(as, dir / "a.csv");
    CHECK(load_assignment(dir / "a.csv") == as);
    CHECK_THROWS_AS(validate_assignment(sets, Assignment{{0}}), ValidationError);
    std::filesystem::remove_all(dir);
}
