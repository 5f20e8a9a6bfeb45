#include "assign_surrogate/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"

namespace surrogate {

namespace {

constexpr double kMinute = 60.0;

template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& body) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

double median(std::vector<double> v) {
    if (v.empty()) throw ValidationError("median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("spearman: sizes differ");
    if (a.size() < 2) throw ValidationError("spearman: needs at least two points");
    const auto ra = ranks(a), rb = ranks(b);
    const double mean = 0.5 * static_cast<double>(a.size() + 1);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (ra[i] - mean) * (rb[i] - mean);
        saa += (ra[i] - mean) * (ra[i] - mean);
        sbb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (saa == 0 || sbb == 0) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

TTReport tt_report(const std::vector<std::int64_t>& ids, const std::vector<double>& true_tt,
                   const std::vector<double>& pred_tt) {
    if (ids.empty()) throw ValidationError("evaluate tt: empty test set");
    if (ids.size() != true_tt.size() || ids.size() != pred_tt.size()) {
        throw ValidationError("evaluate tt: ids, true and predicted travel times differ in length");
    }
    TTReport r;
    std::vector<double> rel;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!(true_tt[i] > 0)) throw ValidationError("evaluate tt: true travel time must be positive");
        TTRow row{ids[i], true_tt[i], pred_tt[i], std::abs(pred_tt[i] - true_tt[i]), 0.0};
        row.rel_delta = row.delta / row.true_tt;
        r.sum_delta += row.delta;
        rel.push_back(row.rel_delta);
        r.rows.push_back(row);
    }
    const auto n = static_cast<double>(ids.size());
    r.mean_delta = r.sum_delta / n;
    r.mean_rel_delta = std::accumulate(rel.begin(), rel.end(), 0.0) / n;
    r.median_rel_delta = median(rel);
    r.spearman = ids.size() >= 2 ? spearman(true_tt, pred_tt) : 0.0;
    return r;
}

TTReport evaluate_tt(const Model& model, const Dataset& ds, const std::vector<std::size_t>& runs,
                     std::size_t workers) {
    if (runs.empty()) throw ValidationError("evaluate tt: empty test set");
    std::vector<std::int64_t> ids(runs.size());
    std::vector<double> truth(runs.size()), pred(runs.size());
    parallel_for(runs.size(), workers, [&](std::size_t i) {
        const Run& run = ds.runs.at(runs[i]);
        ids[i] = run.sim_id;
        truth[i] = run.travel_time;
        pred[i] = aggregate_tt(model.rollout(run.assignment), model.config().interval);
    });
    return tt_report(ids, truth, pred);
}

void save_tt_report(const TTReport& report, const std::filesystem::path& dir) {
    std::ostringstream rows;
    rows << "sample_id,true_tt_min,pred_tt_min,delta_min,rel_delta\n";
    for (const auto& r : report.rows) {
        rows << r.sample_id << ',' << csv::format(r.true_tt / kMinute) << ',' << csv::format(r.pred_tt / kMinute)
             << ',' << csv::format(r.delta / kMinute) << ',' << csv::format(r.rel_delta) << '\n';
    }
    csv::write_text(dir / "tt_report.csv", rows.str());

    std::ostringstream summary;
    summary << "metric,value\n"
            << "assignments," << report.rows.size() << '\n'
            << "spearman," << csv::format(report.spearman) << '\n'
            << "mean_rel_delta," << csv::format(report.mean_rel_delta) << '\n'
            << "median_rel_delta," << csv::format(report.median_rel_delta) << '\n'
            << "mean_delta_min," << csv::format(report.mean_delta / kMinute) << '\n'
            << "sum_delta_min," << csv::format(report.sum_delta / kMinute) << '\n';
    csv::write_text(dir / "tt_summary.csv", summary.str());
}

NodeTrace node_trace(const Model& model, const Run& run, std::size_t cell) {
    if (cell >= run.flows.rows()) {
        throw ValidationError("node trace: cell " + std::to_string(cell) + " out of range (S = " +
                              std::to_string(run.flows.rows()) + ")");
    }
    const RealMatrix pred = model.rollout(run.assignment);
    const RealMatrix step = one_step_predictions(model, run);
    NodeTrace trace;
    trace.cell = cell;
    for (std::size_t t = 0; t < run.flows.cols(); ++t) {
        trace.truth.push_back(static_cast<double>(run.flows(cell, t)));
        trace.prediction.push_back(pred(cell, t));
        trace.one_step.push_back(step(cell, t));
    }
    return trace;
}

void save_node_trace(const NodeTrace& trace, const std::filesystem::path& dir) {
    std::ostringstream out;
    out << "t,true_q,pred_q,pred_q_one_step\n";
    for (std::size_t t = 0; t < trace.truth.size(); ++t) {
        out << t << ',' << csv::format(trace.truth[t]) << ',' << csv::format(trace.prediction[t]) << ','
            << csv::format(trace.one_step[t]) << '\n';
    }
    csv::write_text(dir / ("trace_" + std::to_string(trace.cell) + ".csv"), out.str());
}

double tt_variance(const TTReport& report) {
    if (report.rows.empty()) return 0.0;
    // Shifted by the first value so identical predictions give exactly zero.
    const double x0 = report.rows[0].pred_tt;
    const auto n = static_cast<double>(report.rows.size());
    double sum = 0, sq = 0;
    for (const auto& r : report.rows) {
        sum += r.pred_tt - x0;
        sq += (r.pred_tt - x0) * (r.pred_tt - x0);
    }
    return std::max(0.0, sq / n - (sum / n) * (sum / n));
}

AblationReport ablation_compare(const Model& full, const Model& flow_only, const Dataset& ds,
                                const std::vector<std::size_t>& runs, std::size_t workers) {
    auto a = full.config(), b = flow_only.config();
    if (!a.use_assignment || b.use_assignment) {
        throw ValidationError("ablation: expected a full model and a flow-only model");
    }
    b.use_assignment = true;
    if (!(a == b) || full.adjacency().data() != flow_only.adjacency().data()) {
        throw ValidationError("ablation: model configs differ beyond the assignment branch");
    }
    AblationReport r;
    r.full_metrics = evaluate_split(full, ds, runs);
    r.flow_only_metrics = evaluate_split(flow_only, ds, runs);
    r.full = evaluate_tt(full, ds, runs, workers);
    r.flow_only = evaluate_tt(flow_only, ds, runs, workers);
    r.full_tt_variance = tt_variance(r.full);
    r.flow_only_tt_variance = tt_variance(r.flow_only);
    return r;
}

void save_ablation(const AblationReport& report, const std::filesystem::path& dir) {
    std::ostringstream out;
    out << "model,mae,rmse,mean_delta_min,sum_delta_min,median_rel_delta,spearman,tt_variance\n";
    auto row = [&](const char* name, const Metrics& m, const TTReport& tt, double var) {
        out << name << ',' << csv::format(m.mae) << ',' << csv::format(m.rmse) << ','
            << csv::format(tt.mean_delta / kMinute) << ',' << csv::format(tt.sum_delta / kMinute) << ','
            << csv::format(tt.median_rel_delta) << ',' << csv::format(tt.spearman) << ',' << csv::format(var)
            << '\n';
    };
    row("full", report.full_metrics, report.full, report.full_tt_variance);
    row("flow_only", report.flow_only_metrics, report.flow_only, report.flow_only_tt_variance);
    csv::write_text(dir / "ablation.csv", out.str());
}

SpeedReport speed_bench(const Model& model, const RoadNetwork& net, const CellMap& cmap, const Demand& demand,
                        const ChoiceSets& sets, const std::vector<Assignment>& assignments, const SimConfig& sim,
                        std::size_t repeats) {
    if (assignments.size() < 5) throw ValidationError("speed bench: needs at least 5 assignments");
    if (repeats < 1) throw ValidationError("speed bench: repeats must be >= 1");
    if (model.config().cells != cmap.cell_count) throw ValidationError("speed bench: model and cell map differ in S");
    SpeedReport report;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        SpeedRow row;
        row.index = i;
        row.simulator_seconds = row.surrogate_seconds = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < repeats; ++r) {
            auto start = std::chrono::steady_clock::now();
            const double sim_tt = simulate(net, demand, sets, assignments[i], cmap, sim).total_travel_time;
            row.simulator_seconds = std::min(row.simulator_seconds, seconds_since(start));

            start = std::chrono::steady_clock::now();
            const auto a = assignment_matrix(demand, sets, assignments[i], cmap, sim.intervals(), sim.interval);
            const double pred_tt = aggregate_tt(model.rollout(a.counts), sim.interval);
            row.surrogate_seconds = std::min(row.surrogate_seconds, seconds_since(start));
            if (!std::isfinite(sim_tt) || !std::isfinite(pred_tt)) throw RuntimeFailure("speed bench: non-finite TT");
        }
        row.ratio = row.simulator_seconds / row.surrogate_seconds;
        report.rows.push_back(row);
    }
    std::vector<double> sim_t, sur_t, ratio;
    for (const auto& r : report.rows) {
        sim_t.push_back(r.simulator_seconds);
        sur_t.push_back(r.surrogate_seconds);
        ratio.push_back(r.ratio);
    }
    report.median_simulator = median(sim_t);
    report.median_surrogate = median(sur_t);
    report.median_ratio = median(ratio);
    return report;
}

void save_speed(const SpeedReport& report, const std::filesystem::path& dir) {
    std::ostringstream out;
    out << "index,simulator_s,surrogate_s,ratio\n";
    for (const auto& r : report.rows) {
        out << r.index << ',' << csv::format(r.simulator_seconds) << ',' << csv::format(r.surrogate_seconds) << ','
            << csv::format(r.ratio) << '\n';
    }
    out << "median," << csv::format(report.median_simulator) << ',' << csv::format(report.median_surrogate) << ','
        << csv::format(report.median_ratio) << '\n';
    csv::write_text(dir / "speed.csv", out.str());
}

}  // namespace surrogate
