#include "assign_surrogate/dataset.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"
#include "assign_surrogate/rng.hpp"
#include "json.hpp"

namespace surrogate {

void validate(const DatasetSpec& spec) {
    if (spec.flow_window < 1 || spec.assign_window < 1) throw ValidationError("dataset windows must be >= 1");
    if (!(spec.interval > 0)) throw ValidationError("dataset interval must be positive");
}

namespace {

template <typename M>
RealMatrix window_of(const M& m, std::size_t t, std::size_t w) {
    RealMatrix out(w, m.rows(), 0.0);
    for (std::size_t k = 0; k < w; ++k) {
        if (t + k < w) continue;
        const std::size_t col = t + k - w;
        if (col >= m.cols()) continue;
        for (std::size_t s = 0; s < m.rows(); ++s) out(k, s) = static_cast<double>(m(s, col));
    }
    return out;
}

void check_run(const Run& run, const DatasetSpec& spec) {
    if (run.assignment.rows() != spec.cells || run.flows.rows() != spec.cells ||
        run.assignment.cols() != run.flows.cols()) {
        std::ostringstream msg;
        msg << "run " << run.sim_id << ": A is " << run.assignment.rows() << "x" << run.assignment.cols()
            << ", Q is " << run.flows.rows() << "x" << run.flows.cols() << ", expected " << spec.cells
            << " cells and equal lengths";
        throw ValidationError(msg.str());
    }
}

}  // namespace

RealMatrix time_window(const IntMatrix& m, std::size_t t, std::size_t w) { return window_of(m, t, w); }
RealMatrix time_window(const RealMatrix& m, std::size_t t, std::size_t w) { return window_of(m, t, w); }

Sample make_sample(const std::vector<Run>& runs, std::size_t run, std::size_t t, const DatasetSpec& spec) {
    const Run& r = runs.at(run);
    Sample s;
    s.run = run;
    s.t = t;
    s.assign_window = time_window(r.assignment, t, spec.assign_window);
    s.flow_window = time_window(r.flows, t, spec.flow_window);
    s.target.resize(spec.cells);
    for (std::size_t c = 0; c < spec.cells; ++c) s.target[c] = static_cast<double>(r.flows(c, t));
    return s;
}

std::vector<Sample> build_samples(const std::vector<Run>& runs, const std::vector<std::size_t>& subset,
                                  const DatasetSpec& spec) {
    validate(spec);
    std::vector<Sample> out;
    for (std::size_t i : subset) {
        check_run(runs.at(i), spec);
        for (std::size_t t = 1; t < runs[i].flows.cols(); ++t) out.push_back(make_sample(runs, i, t, spec));
    }
    return out;
}

std::vector<Sample> build_samples(const std::vector<Run>& runs, const DatasetSpec& spec) {
    std::vector<std::size_t> all(runs.size());
    std::iota(all.begin(), all.end(), 0);
    return build_samples(runs, all, spec);
}

Split split_runs(std::size_t n_runs, const SplitSpec& spec, std::uint64_t seed) {
    if (n_runs < 10) throw ValidationError("split needs at least 10 runs, got " + std::to_string(n_runs));
    if (spec.train < 0 || spec.val < 0 || spec.test < 0 || std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
        throw ValidationError("split fractions must be nonnegative and sum to 1");
    }
    std::vector<std::size_t> order(n_runs);
    std::iota(order.begin(), order.end(), 0);
    Rng(seed).shuffle(order);
    auto rounded = [&](double f) { return static_cast<std::size_t>(std::floor(f * n_runs + 0.5 + 1e-9)); };
    const std::size_t n_train = std::min(n_runs, rounded(spec.train));
    const std::size_t n_val = std::min(n_runs - n_train, rounded(spec.val));
    Split s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.end());
    return s;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    nlohmann::ordered_json m;
    m["spec"] = {{"cells", ds.spec.cells},
                 {"interval_s", ds.spec.interval},
                 {"flow_window", ds.spec.flow_window},
                 {"assign_window", ds.spec.assign_window}};
    m["split"] = {{"train", ds.split.train}, {"val", ds.split.val}, {"test", ds.split.test}};
    auto runs = nlohmann::ordered_json::array();
    for (const auto& r : ds.runs) {
        runs.push_back({{"sim_id", r.sim_id}, {"intervals", r.flows.cols()}});
        const auto rd = dir / "runs" / std::to_string(r.sim_id);
        csv::write_int_matrix(rd / "A.csv", r.assignment);
        csv::write_int_matrix(rd / "Q.csv", r.flows);
        std::ostringstream sum;
        sum << "sample_id,TT_s,TT_min\n"
            << r.sim_id << ',' << csv::format(r.travel_time) << ',' << csv::format(r.travel_time / 60.0) << '\n';
        csv::write_text(rd / "summary.csv", sum.str());
    }
    m["runs"] = runs;
    csv::write_text(dir / "manifest.json", m.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto mpath = dir / "manifest.json";
    const std::string text = csv::read_text(mpath);
    Dataset ds;
    try {
        const auto m = nlohmann::json::parse(text);
        const auto& spec = m.at("spec");
        ds.spec.cells = spec.at("cells").get<std::size_t>();
        ds.spec.interval = spec.at("interval_s").get<double>();
        ds.spec.flow_window = spec.at("flow_window").get<std::size_t>();
        ds.spec.assign_window = spec.at("assign_window").get<std::size_t>();
        ds.split.train = m.at("split").at("train").get<std::vector<std::size_t>>();
        ds.split.val = m.at("split").at("val").get<std::vector<std::size_t>>();
        ds.split.test = m.at("split").at("test").get<std::vector<std::size_t>>();
        for (const auto& entry : m.at("runs")) {
            Run r;
            r.sim_id = entry.at("sim_id").get<std::int64_t>();
            const auto intervals = entry.at("intervals").get<std::size_t>();
            const auto rd = dir / "runs" / std::to_string(r.sim_id);
            r.assignment = csv::read_int_matrix(rd / "A.csv");
            r.flows = csv::read_int_matrix(rd / "Q.csv");
            if (r.assignment.rows() != ds.spec.cells || r.assignment.cols() != intervals) {
                throw LoadError((rd / "A.csv").string() + ": expected " + std::to_string(ds.spec.cells) + "x" +
                                std::to_string(intervals));
            }
            if (r.flows.rows() != ds.spec.cells || r.flows.cols() != intervals) {
                throw LoadError((rd / "Q.csv").string() + ": expected " + std::to_string(ds.spec.cells) + "x" +
                                std::to_string(intervals));
            }
            const auto sum = csv::read(rd / "summary.csv");
            if (sum.rows.empty()) throw LoadError(sum.source + ": no summary row");
            r.travel_time = csv::to_double(sum.rows.front()[sum.column("TT_s")], sum.source);
            ds.runs.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(mpath.string() + ": " + e.what());
    }
    for (const auto* part : {&ds.split.train, &ds.split.val, &ds.split.test}) {
        for (std::size_t i : *part) {
            if (i >= ds.runs.size()) throw LoadError(mpath.string() + ": split index out of range");
        }
    }
    return ds;
}

}  // namespace surrogate
