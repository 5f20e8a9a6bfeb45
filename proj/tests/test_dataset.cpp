#include <filesystem>
#include <fstream>
#include <set>

#include "assign_surrogate/dataset.hpp"
#include "assign_surrogate/error.hpp"
#include "assign_surrogate/rng.hpp"
#include "doctest.h"

using namespace surrogate;

namespace {

Run random_run(std::int64_t id, std::size_t cells, std::size_t t, std::uint64_t seed) {
    Rng rng(seed);
    Run r{id, IntMatrix(cells, t), IntMatrix(cells, t), 0.0};
    for (auto& v : r.assignment.data()) v = static_cast<std::int64_t>(rng.below(5));
    for (auto& v : r.flows.data()) v = static_cast<std::int64_t>(rng.below(9));
    r.travel_time = rng.uniform(100, 10000);
    return r;
}

}  // namespace

TEST_CASE("sample counts") {
    DatasetSpec spec{3, 10, 4, 4};
    CHECK(build_samples({random_run(0, 3, 1, 1)}, spec).empty());
    CHECK(build_samples({random_run(0, 3, 300, 1)}, spec).size() == 299);
    CHECK_THROWS_WITH_AS(build_samples({random_run(7, 2, 10, 1)}, spec), doctest::Contains("run 7"), ValidationError);
    CHECK_THROWS_AS(build_samples({}, DatasetSpec{3, 10, 0, 4}), ValidationError);
}

TEST_CASE("windows come from their own run with left zero padding") {
    DatasetSpec spec{4, 10, 5, 3};
    std::vector<Run> runs;
    for (int i = 0; i < 4; ++i) runs.push_back(random_run(i, 4, 20 + i, 100 + i));
    auto samples = build_samples(runs, spec);
    for (const auto& s : samples) {
        const Run& r = runs[s.run];
        for (std::size_t k = 0; k < spec.flow_window; ++k) {
            const long col = static_cast<long>(s.t) - static_cast<long>(spec.flow_window) + static_cast<long>(k);
            for (std::size_t c = 0; c < 4; ++c) {
                const double expect = col < 0 ? 0.0 : static_cast<double>(r.flows(c, static_cast<std::size_t>(col)));
                CHECK(s.flow_window(k, c) == expect);
            }
        }
        for (std::size_t k = 0; k < spec.assign_window; ++k) {
            const long col = static_cast<long>(s.t) - static_cast<long>(spec.assign_window) + static_cast<long>(k);
            for (std::size_t c = 0; c < 4; ++c) {
                const double expect =
                    col < 0 ? 0.0 : static_cast<double>(r.assignment(c, static_cast<std::size_t>(col)));
                CHECK(s.assign_window(k, c) == expect);
            }
        }
        for (std::size_t c = 0; c < 4; ++c) CHECK(s.target[c] == static_cast<double>(r.flows(c, s.t)));
    }
}

TEST_CASE("split sizes and partition") {
    auto s10 = split_runs(10, {}, 1);
    CHECK(s10.train.size() == 7);
    CHECK(s10.val.size() == 1);
    CHECK(s10.test.size() == 2);
    auto s1000 = split_runs(1000, {}, 1);
    CHECK(s1000.train.size() == 700);
    CHECK(s1000.val.size() == 100);
    CHECK(s1000.test.size() == 200);
    CHECK(split_runs(150, {}, 4) == split_runs(150, {}, 4));
    CHECK_THROWS_AS(split_runs(9, {}, 1), ValidationError);
    CHECK_THROWS_AS(split_runs(20, {0.5, 0.5, 0.5}, 1), ValidationError);

    for (std::size_t n = 10; n < 300; n += 7) {
        auto s = split_runs(n, {}, n);
        std::set<std::size_t> all;
        for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
        CHECK(all.size() == n);
        CHECK(s.train.size() + s.val.size() + s.test.size() == n);
        CHECK(*all.rbegin() == n - 1);
    }
}

TEST_CASE("dataset round trip and corruption") {
    const auto dir = std::filesystem::temp_directory_path() / "surrogate_test_dataset";
    std::filesystem::remove_all(dir);

    Dataset empty{{2, 10, 3, 3}, {}, {}};
    save_dataset(empty, dir / "empty");
    CHECK(load_dataset(dir / "empty") == empty);

    Dataset ds{{5, 10, 4, 4}, {}, {}};
    for (int i = 0; i < 3; ++i) ds.runs.push_back(random_run(i * 3, 5, 15 + i, 9 + i));
    ds.split = {{0, 2}, {1}, {}};
    save_dataset(ds, dir / "three");
    CHECK(load_dataset(dir / "three") == ds);

    const auto q = dir / "three" / "runs" / "3" / "Q.csv";
    {
        std::ifstream in(q);
        std::string first;
        std::getline(in, first);
        std::ofstream(q, std::ios::trunc) << first << "\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir / "three"), doctest::Contains("Q.csv"), LoadError);
    CHECK_THROWS_WITH_AS(load_dataset(dir / "missing"), doctest::Contains("manifest.json"), LoadError);
    std::filesystem::remove_all(dir);
}
