#include <cmath>
#include <filesystem>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"
#include "assign_surrogate/evaluation.hpp"
#include "doctest.h"
#include "scenarios.hpp"

using namespace surrogate;

namespace {

// O(n^2) ranks: 1 + count below + half the other ties.
std::vector<double> brute_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size(), 1.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (j == i) continue;
            if (v[j] < v[i]) r[i] += 1.0;
            if (v[j] == v[i]) r[i] += 0.5;
        }
    }
    return r;
}

double brute_spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = brute_ranks(a), rb = brute_ranks(b);
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += ra[i] / n, mb += rb[i] / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

ModelConfig tiny_model(const Dataset& ds) {
    ModelConfig cfg;
    cfg.hidden = 8;
    cfg.residual_channels = 4;
    return fit_model_config(cfg, ds);
}

void randomize(Model& m, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& [name, t] : m.named_parameters()) {
        auto copy = t;
        for (auto& v : copy.value_mut()) v = rng.uniform(-0.5, 0.5);
    }
}

std::filesystem::path scratch(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("ranks and median") {
    CHECK(ranks({10, 30, 20}) == std::vector<double>{1, 3, 2});
    CHECK(ranks({5, 1, 5, 5}) == std::vector<double>{3, 1, 3, 3});
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 3, 2}) == 2.5);
    CHECK_THROWS_AS(median({}), ValidationError);
}

TEST_CASE("spearman matches brute-force ranks") {
    Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(19);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            // Small integer ranges force ties.
            a[i] = trial % 2 ? std::floor(rng.uniform(0, 5)) : rng.uniform(-1, 1);
            b[i] = std::floor(rng.uniform(0, 6));
        }
        const double expected = brute_spearman(a, b);
        if (!std::isfinite(expected)) {
            CHECK(spearman(a, b) == 0.0);
            continue;
        }
        const double rho = spearman(a, b);
        CHECK(rho == doctest::Approx(expected).epsilon(1e-12));
        CHECK(rho >= -1.0);
        CHECK(rho <= 1.0);
    }
    // Tie-free closed form 1 - 6 sum d^2 / (n (n^2 - 1)).
    const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 1, 4, 3, 5};
    CHECK(spearman(x, y) == doctest::Approx(1.0 - 6.0 * 4 / (5.0 * 24)));
    CHECK(spearman(x, {5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(spearman({1}, {1}), ValidationError);
}

TEST_CASE("travel time report arithmetic") {
    const auto r = tt_report({7}, {48000}, {54000});
    CHECK(r.rows[0].rel_delta == doctest::Approx(0.125));
    CHECK(r.rows[0].delta == 6000.0);

    const auto exact = tt_report({1, 2, 3}, {100, 300, 200}, {100, 300, 200});
    CHECK(exact.sum_delta == 0.0);
    CHECK(exact.median_rel_delta == 0.0);
    CHECK(exact.spearman == doctest::Approx(1.0));

    const auto mixed = tt_report({1, 2, 3, 4}, {100, 200, 400, 800}, {110, 180, 400, 1000});
    CHECK(mixed.sum_delta == doctest::Approx(10 + 20 + 0 + 200));
    CHECK(mixed.mean_delta == doctest::Approx(57.5));
    CHECK(mixed.median_rel_delta == doctest::Approx(0.1));
    CHECK(mixed.mean_rel_delta == doctest::Approx((0.1 + 0.1 + 0 + 0.25) / 4));

    CHECK_THROWS_AS(tt_report({}, {}, {}), ValidationError);
    CHECK_THROWS_AS(tt_report({1}, {0}, {1}), ValidationError);
}

TEST_CASE("relative errors and rank correlation are unit invariant") {
    Rng rng(5);
    std::vector<std::int64_t> ids;
    std::vector<double> t_s, p_s, t_min, p_min;
    for (int i = 0; i < 15; ++i) {
        ids.push_back(i);
        t_s.push_back(rng.uniform(1000, 9000));
        p_s.push_back(rng.uniform(1000, 9000));
        t_min.push_back(t_s.back() / 60);
        p_min.push_back(p_s.back() / 60);
    }
    const auto s = tt_report(ids, t_s, p_s), m = tt_report(ids, t_min, p_min);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        CHECK(s.rows[i].rel_delta == doctest::Approx(m.rows[i].rel_delta).epsilon(1e-12));
        CHECK(s.rows[i].delta / 60 == doctest::Approx(m.rows[i].delta).epsilon(1e-12));
    }
    CHECK(s.spearman == m.spearman);
    CHECK(s.median_rel_delta == doctest::Approx(m.median_rel_delta).epsilon(1e-12));
}

TEST_CASE("ground-truth flows through aggregation stay within the simulator identity bound") {
    const auto data = scenario::small_dataset(10, 31);
    std::vector<std::int64_t> ids;
    std::vector<double> truth, via_flows;
    for (const auto& run : data.ds.runs) {
        ids.push_back(run.sim_id);
        truth.push_back(run.travel_time);
        via_flows.push_back(aggregate_tt(run.flows, data.ds.spec.interval));
    }
    const auto r = tt_report(ids, truth, via_flows);
    for (const auto& row : r.rows) CHECK(row.delta <= 2.0 * 60 * data.ds.spec.interval);
}

TEST_CASE("evaluate_tt uses rollout and aggregation") {
    const auto data = scenario::small_dataset(10, 32);
    Model m(tiny_model(data.ds), data.adjacency, 4);
    randomize(m, 9);
    const auto& test = data.ds.split.test;
    const auto r = evaluate_tt(m, data.ds, test, 1);
    REQUIRE(r.rows.size() == test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& run = data.ds.runs[test[i]];
        CHECK(r.rows[i].sample_id == run.sim_id);
        CHECK(r.rows[i].true_tt == run.travel_time);
        CHECK(r.rows[i].pred_tt == aggregate_tt(m.rollout(run.assignment), 10.0));
    }
    const auto threaded = evaluate_tt(m, data.ds, data.ds.split.train, 3);
    const auto serial = evaluate_tt(m, data.ds, data.ds.split.train, 1);
    for (std::size_t i = 0; i < serial.rows.size(); ++i) CHECK(threaded.rows[i].pred_tt == serial.rows[i].pred_tt);
    CHECK_THROWS_AS(evaluate_tt(m, data.ds, {}), ValidationError);

    const auto dir = scratch("surrogate_eval_tt");
    save_tt_report(r, dir);
    const auto table = csv::read(dir / "tt_report.csv");
    CHECK(table.header == std::vector<std::string>{"sample_id", "true_tt_min", "pred_tt_min", "delta_min", "rel_delta"});
    CHECK(table.rows.size() == test.size());
    const auto summary = csv::read_text(dir / "tt_summary.csv");
    CHECK(summary.find("spearman,") != std::string::npos);
    CHECK(summary.find("sum_delta_min,") != std::string::npos);
    CHECK(summary.find("mean_delta_min,") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("node traces") {
    const auto data = scenario::small_dataset(10, 33);
    const Model m(tiny_model(data.ds), data.adjacency, 4);
    const auto& run = data.ds.runs[0];
    const auto trace = node_trace(m, run, 2);
    CHECK(trace.truth.size() == run.flows.cols());
    CHECK(trace.prediction.size() == run.flows.cols());
    for (std::size_t t = 0; t < trace.truth.size(); ++t) CHECK(trace.truth[t] == run.flows(2, t));
    CHECK_THROWS_AS(node_trace(m, run, run.flows.rows()), ValidationError);

    // One-step values come from the true windows before t.
    REQUIRE(trace.one_step.size() == run.flows.cols());
    CHECK(trace.one_step[0] == 0.0);
    const auto& spec = data.ds.spec;
    for (std::size_t t : {std::size_t{1}, std::size_t{5}, run.flows.cols() - 1}) {
        const auto step = m.predict_step(time_window(run.assignment, t, spec.assign_window),
                                         time_window(run.flows, t, spec.flow_window));
        CHECK(trace.one_step[t] == doctest::Approx(step[2]).epsilon(1e-12));
    }

    const auto dir = scratch("surrogate_trace");
    save_node_trace(trace, dir);
    const auto table = csv::read(dir / "trace_2.csv");
    CHECK(table.header == std::vector<std::string>{"t", "true_q", "pred_q", "pred_q_one_step"});
    CHECK(table.rows.size() == run.flows.cols());
    std::filesystem::remove_all(dir);
}

TEST_CASE("ablation comparison") {
    const auto data = scenario::small_dataset(10, 34);
    Model full(tiny_model(data.ds), data.adjacency, 4);
    randomize(full, 10);
    const Model flow = full.flow_only_variant();
    const auto r = ablation_compare(full, flow, data.ds, data.ds.split.train);
    CHECK(r.flow_only_tt_variance == 0.0);
    CHECK(r.full_tt_variance > 0.0);
    CHECK(r.full_metrics.rmse >= r.full_metrics.mae);

    CHECK_THROWS_AS(ablation_compare(flow, full, data.ds, data.ds.split.train), ValidationError);
    auto other_cfg = tiny_model(data.ds);
    other_cfg.hidden = 6;
    other_cfg.use_assignment = false;
    const Model other(other_cfg, data.adjacency, 1);
    CHECK_THROWS_AS(ablation_compare(full, other, data.ds, data.ds.split.train), ValidationError);

    const auto dir = scratch("surrogate_ablation");
    save_ablation(r, dir);
    const auto table = csv::read(dir / "ablation.csv");
    CHECK(table.header == std::vector<std::string>{"model", "mae", "rmse", "mean_delta_min", "sum_delta_min",
                                                   "median_rel_delta", "spearman", "tt_variance"});
    REQUIRE(table.rows.size() == 2);
    CHECK(table.rows[0][0] == "full");
    CHECK(table.rows[1][0] == "flow_only");
    std::filesystem::remove_all(dir);
}

TEST_CASE("speed benchmark") {
    auto sc = scenario::random_grid(3);
    sc.cfg.horizon = 600;
    std::vector<Assignment> assignments;
    for (std::uint64_t i = 0; i < 5; ++i) assignments.push_back(random_assignment(sc.sets, i));
    ModelConfig cfg;
    cfg.cells = sc.cmap.cell_count;
    cfg.hidden = 8;
    cfg.residual_channels = 4;
    const Model m(cfg, build_cell_graph(sc.net, sc.cmap).adjacency, 1);
    const auto r = speed_bench(m, sc.net, sc.cmap, sc.demand, sc.sets, assignments, sc.cfg, 1);
    CHECK(r.rows.size() == 5);
    for (const auto& row : r.rows) {
        CHECK(row.simulator_seconds > 0);
        CHECK(row.surrogate_seconds > 0);
        CHECK(row.ratio == doctest::Approx(row.simulator_seconds / row.surrogate_seconds));
    }
    assignments.pop_back();
    CHECK_THROWS_AS(speed_bench(m, sc.net, sc.cmap, sc.demand, sc.sets, assignments, sc.cfg), ValidationError);
    CHECK_THROWS_AS(speed_bench(m, sc.net, sc.cmap, sc.demand, sc.sets, {}, sc.cfg), ValidationError);

    const auto dir = scratch("surrogate_speed");
    save_speed(r, dir);
    const auto table = csv::read(dir / "speed.csv");
    CHECK(table.header == std::vector<std::string>{"index", "simulator_s", "surrogate_s", "ratio"});
    CHECK(table.rows.size() == 6);
    std::filesystem::remove_all(dir);
}
