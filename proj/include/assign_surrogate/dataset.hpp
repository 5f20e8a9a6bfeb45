#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "assign_surrogate/matrix.hpp"

namespace surrogate {

struct DatasetSpec {
    std::size_t cells = 0;
    double interval = 10.0;     // seconds
    std::size_t flow_window = 12;
    std::size_t assign_window = 12;
    bool operator==(const DatasetSpec&) const = default;
};

void validate(const DatasetSpec& spec);

/// One simulation: assignment matrix, flow matrix (both S x T_i) and the
/// simulator's system travel time.
struct Run {
    std::int64_t sim_id = 0;
    IntMatrix assignment;
    IntMatrix flows;
    double travel_time = 0.0;  // seconds
    bool operator==(const Run&) const = default;
};

/// Supervised window: columns [t - W, t) of A and Q, zero-padded on the left,
/// laid out time-major (W x S), plus the target column Q[:, t].
struct Sample {
    std::size_t run = 0;  // index into the run list
    std::size_t t = 0;
    RealMatrix assign_window;
    RealMatrix flow_window;
    std::vector<double> target;
};

/// Columns [t - w, t) of `m` as a w x rows matrix; columns before 0 are zero.
RealMatrix time_window(const IntMatrix& m, std::size_t t, std::size_t w);
RealMatrix time_window(const RealMatrix& m, std::size_t t, std::size_t w);

Sample make_sample(const std::vector<Run>& runs, std::size_t run, std::size_t t, const DatasetSpec& spec);

/// One sample per (run, t) for t in [1, T_i), runs in list order.
/// Throws ValidationError naming the run on a shape mismatch.
std::vector<Sample> build_samples(const std::vector<Run>& runs, const DatasetSpec& spec);

/// Same, restricted to the listed run indices.
std::vector<Sample> build_samples(const std::vector<Run>& runs, const std::vector<std::size_t>& subset,
                                  const DatasetSpec& spec);

struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

/// Run indices per subset.
struct Split {
    std::vector<std::size_t> train, val, test;
    bool operator==(const Split&) const = default;
};

/// Seeded shuffle of 0..n_runs-1 followed by a contiguous partition; sizes are
/// the rounded train and validation fractions, the rest is test.
Split split_runs(std::size_t n_runs, const SplitSpec& spec, std::uint64_t seed);

struct Dataset {
    DatasetSpec spec;
    std::vector<Run> runs;
    Split split;
    bool operator==(const Dataset&) const = default;
};

/// manifest.json plus runs/<sim_id>/{A,Q,summary}.csv.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace surrogate
