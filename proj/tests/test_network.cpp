#include <cmath>
#include <filesystem>
#include <fstream>

#include "assign_surrogate/error.hpp"
#include "assign_surrogate/network.hpp"
#include "assign_surrogate/rng.hpp"
#include "doctest.h"

using namespace surrogate;

TEST_CASE("grid network sizes and storage") {
    auto n12 = synth_grid_network(1, 2, 100, 10, 0.5);
    CHECK(n12.node_count() == 2);
    CHECK(n12.edge_count() == 2);
    for (const auto& e : n12.edges()) CHECK(e.storage == 13);

    CHECK(synth_grid_network(2, 2, 100, 10, 0.5).edge_count() == 8);

    auto n33 = synth_grid_network(3, 3, 50, 14, 1.0);
    CHECK(n33.node_count() == 9);
    // 3 rows x 2 horizontal links + 3 cols x 2 vertical links = 12 undirected links.
    CHECK(n33.edge_count() == 24);
    for (const auto& e : n33.edges()) CHECK(e.storage == 6);
}

TEST_CASE("grid network rejects non-positive parameters") {
    CHECK_THROWS_AS(synth_grid_network(0, 2, 100, 10, 0.5), ValidationError);
    CHECK_THROWS_AS(synth_grid_network(2, 2, -1, 10, 0.5), ValidationError);
    CHECK_THROWS_AS(synth_grid_network(2, 2, 100, 0, 0.5), ValidationError);
    CHECK_THROWS_AS(synth_grid_network(2, 2, 100, 10, 0), ValidationError);
}

TEST_CASE("network validation") {
    std::vector<Node> nodes{{0, 0, 0}, {1, 1, 0}};
    CHECK_THROWS_AS(RoadNetwork(nodes, {{0, 0, 2, 10, 1, 1, 1}}), ValidationError);
    CHECK_THROWS_AS(RoadNetwork(nodes, {{0, 0, 0, 10, 1, 1, 1}}), ValidationError);
    CHECK_THROWS_AS(RoadNetwork(nodes, {{0, 0, 1, 10, 1, 1, 0}}), ValidationError);
    CHECK_THROWS_AS(RoadNetwork(nodes, {{0, 0, 1, 10, 1, 1, 1}, {0, 1, 0, 10, 1, 1, 1}}), ValidationError);
    CHECK_THROWS_AS(RoadNetwork({{0, 0, 0}, {0, 1, 1}}, {}), ValidationError);
}

TEST_CASE("hex binning examples") {
    RoadNetwork same({{0, 5, 5}, {1, 5, 5}, {2, 5, 5}}, {});
    CHECK(build_cell_map(same, 10).cell_count == 1);

    RoadNetwork square({{0, 0, 0}, {1, 1000, 0}, {2, 0, 1000}, {3, 1000, 1000}}, {});
    auto cmap = build_cell_map(square, 50);
    CHECK(cmap.cell_count == 4);

    // Brute force: the hexagon containing a point is the one whose centre is nearest.
    Rng rng(11);
    const double size = 37.0;
    for (int i = 0; i < 2000; ++i) {
        const double x = rng.uniform(-500, 500), y = rng.uniform(-500, 500);
        const HexCoord h = hex_of(x, y, size);
        auto centre = [&](HexCoord c) {
            return std::pair{size * std::sqrt(3.0) * (c.q + c.r / 2.0), size * 1.5 * c.r};
        };
        auto [cx, cy] = centre(h);
        const double d0 = std::hypot(x - cx, y - cy);
        for (int dq = -2; dq <= 2; ++dq) {
            for (int dr = -2; dr <= 2; ++dr) {
                auto [ox, oy] = centre({h.q + dq, h.r + dr});
                CHECK(d0 <= std::hypot(x - ox, y - oy) + 1e-9);
            }
        }
    }

    CHECK_THROWS_AS(build_cell_map(same, 0), ValidationError);
}

TEST_CASE("hex binning is idempotent and continuous") {
    auto net = synth_grid_network(6, 7, 83, 10, 1);
    CHECK(build_cell_map(net, 120) == build_cell_map(net, 120));

    Rng rng(5);
    for (int i = 0; i < 5000; ++i) {
        const double size = rng.uniform(1, 100);
        const double x = rng.uniform(-1000, 1000), y = rng.uniform(-1000, 1000);
        const double angle = rng.uniform(0, 6.283185307179586), dist = rng.uniform(0, size / 2 * 0.999);
        const HexCoord a = hex_of(x, y, size);
        const HexCoord b = hex_of(x + dist * std::cos(angle), y + dist * std::sin(angle), size);
        CHECK(hex_distance(a, b) <= 1);
    }
}

TEST_CASE("cell graph normalisation") {
    RoadNetwork one({{0, 0, 0}, {1, 1, 0}}, {{0, 0, 1, 10, 1, 1, 1}});
    auto g1 = build_cell_graph(one, build_cell_map(one, 100));
    REQUIRE(g1.size() == 1);
    CHECK(g1.adjacency(0, 0) == 1.0);

    RoadNetwork two({{0, 0, 0}, {1, 1000, 0}}, {{0, 0, 1, 10, 1, 1, 1}});
    CellMap cmap{2, {{0, 0}, {1, 1}}};
    auto g2 = build_cell_graph(two, cmap);
    CHECK(g2.adjacency(0, 0) == 1.0);
    CHECK(g2.adjacency(0, 1) == 0.0);
    CHECK(g2.adjacency(1, 0) == 0.5);
    CHECK(g2.adjacency(1, 1) == 0.5);
}

TEST_CASE("cell graph rows are stochastic on random networks") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const int rows = 1 + static_cast<int>(rng.below(6)), cols = 1 + static_cast<int>(rng.below(6));
        auto net = synth_grid_network(rows, cols, rng.uniform(20, 300), 10, 1);
        auto cmap = build_cell_map(net, rng.uniform(10, 500));
        auto g = build_cell_graph(net, cmap);
        const auto cells = edge_cells(net, cmap);
        for (std::size_t i = 0; i < g.size(); ++i) {
            double sum = 0;
            CHECK(g.adjacency(i, i) > 0);
            for (std::size_t j = 0; j < g.size(); ++j) {
                CHECK(g.adjacency(i, j) >= 0);
                sum += g.adjacency(i, j);
                if (i != j && g.adjacency(i, j) > 0) {
                    bool linked = false;
                    for (const auto& e : net.edges()) {
                        linked |= cmap.cell_of(e.from) == j && cmap.cell_of(e.to) == i;
                    }
                    CHECK(linked);
                }
            }
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
        // Every cell is occupied.
        std::vector<int> used(cmap.cell_count, 0);
        for (const auto& [node, cell] : cmap.node_to_cell) used[cell] = 1;
        for (int u : used) CHECK(u == 1);
    }
}

TEST_CASE("network and cell map files") {
    const auto dir = std::filesystem::temp_directory_path() / "surrogate_test_network";
    std::filesystem::remove_all(dir);
    auto net = synth_grid_network(3, 4, 90, 12.5, 0.4);
    save_network(net, dir);
    auto back = load_network(dir);
    REQUIRE(back.edge_count() == net.edge_count());
    for (std::size_t i = 0; i < net.edge_count(); ++i) {
        CHECK(back.edges()[i].length == net.edges()[i].length);
        CHECK(back.edges()[i].storage == net.edges()[i].storage);
    }
    auto cmap = build_cell_map(net, 100);
    save_cell_map(net, cmap, dir / "cells.csv");
    CHECK(load_cell_map(dir / "cells.csv") == cmap);

    // storage column is optional
    {
        std::filesystem::create_directories(dir / "nostore");
        std::filesystem::copy_file(dir / "nodes.csv", dir / "nostore" / "nodes.csv");
        std::ofstream(dir / "nostore" / "edges.csv") << "edge_id,from,to,length,speed,capacity\n0,0,1,100,10,0.5\n";
        auto ns = load_network(dir / "nostore");
        CHECK(ns.edges()[0].storage == 13);
    }
    CHECK_THROWS_AS(load_network(dir / "missing"), LoadError);
    std::filesystem::remove_all(dir);
}
