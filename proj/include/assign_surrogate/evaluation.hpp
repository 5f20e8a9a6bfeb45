#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "assign_surrogate/dataset.hpp"
#include "assign_surrogate/demand_paths.hpp"
#include "assign_surrogate/model.hpp"
#include "assign_surrogate/simulator.hpp"
#include "assign_surrogate/training.hpp"

namespace surrogate {

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> ranks(const std::vector<double>& v);
/// Pearson correlation of the ranks. Returns 0 when either side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct TTRow {
    std::int64_t sample_id = 0;
    double true_tt = 0.0;  // seconds
    double pred_tt = 0.0;  // seconds
    double delta = 0.0;    // |pred - true|, seconds
    double rel_delta = 0.0;
};

struct TTReport {
    std::vector<TTRow> rows;
    double spearman = 0.0;
    double mean_rel_delta = 0.0;
    double median_rel_delta = 0.0;
    double mean_delta = 0.0;  // seconds
    double sum_delta = 0.0;   // seconds
};

/// Per-assignment errors and aggregates from paired travel times (any one unit).
TTReport tt_report(const std::vector<std::int64_t>& ids, const std::vector<double>& true_tt,
                   const std::vector<double>& pred_tt);

/// Rollout + aggregation on every listed run, against the simulator travel time.
/// Rollouts run over `workers` threads.
TTReport evaluate_tt(const Model& model, const Dataset& ds, const std::vector<std::size_t>& runs,
                     std::size_t workers = 1);

/// tt_report.csv (sample_id,true_tt_min,pred_tt_min,delta_min,rel_delta) and
/// tt_summary.csv (metric,value).
void save_tt_report(const TTReport& report, const std::filesystem::path& dir);

struct NodeTrace {
    std::size_t cell = 0;
    std::vector<double> truth;
    std::vector<double> prediction;  // free-running rollout
    std::vector<double> one_step;    // from the true history
};

NodeTrace node_trace(const Model& model, const Run& run, std::size_t cell);
/// trace_<cell>.csv: t,true_q,pred_q,pred_q_one_step
void save_node_trace(const NodeTrace& trace, const std::filesystem::path& dir);

struct AblationReport {
    Metrics full_metrics, flow_only_metrics;
    TTReport full, flow_only;
    double full_tt_variance = 0.0;
    double flow_only_tt_variance = 0.0;
};

/// Population variance of the predicted travel times.
double tt_variance(const TTReport& report);

/// Both models must share every config field except `use_assignment`, which
/// must be true for `full` and false for `flow_only`.
AblationReport ablation_compare(const Model& full, const Model& flow_only, const Dataset& ds,
                                const std::vector<std::size_t>& runs, std::size_t workers = 1);
/// ablation.csv: model,mae,rmse,mean_delta_min,sum_delta_min,median_rel_delta,spearman,tt_variance
void save_ablation(const AblationReport& report, const std::filesystem::path& dir);

struct SpeedRow {
    std::size_t index = 0;
    double simulator_seconds = 0.0;
    double surrogate_seconds = 0.0;
    double ratio = 0.0;  // simulator / surrogate
};

struct SpeedReport {
    std::vector<SpeedRow> rows;
    double median_simulator = 0.0;
    double median_surrogate = 0.0;
    double median_ratio = 0.0;
};

/// Times one simulator run against one surrogate evaluation (assignment matrix,
/// rollout and aggregation) per assignment, serially. Each timing is the best of
/// `repeats` runs. Requires at least 5 assignments.
SpeedReport speed_bench(const Model& model, const RoadNetwork& net, const CellMap& cmap, const Demand& demand,
                        const ChoiceSets& sets, const std::vector<Assignment>& assignments, const SimConfig& sim,
                        std::size_t repeats = 3);
/// speed.csv: index,simulator_s,surrogate_s,ratio
void save_speed(const SpeedReport& report, const std::filesystem::path& dir);

double median(std::vector<double> v);

}  // namespace surrogate
