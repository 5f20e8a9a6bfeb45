#include "assign_surrogate/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"
#include "assign_surrogate/evaluation.hpp"
#include "assign_surrogate/pipeline.hpp"
#include "assign_surrogate/training.hpp"
#include "json.hpp"

namespace surrogate {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr const char* kTool = "assign-surrogate";
constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------- settings

struct Param {
    std::string key;  // section.name
    std::string fallback;
    std::string help;
};

const std::vector<Param> kNetParams{
    {"network.rows", "5", "grid rows"},
    {"network.cols", "5", "grid columns"},
    {"network.edge_length", "200", "edge length [m]"},
    {"network.speed", "10", "free-flow speed [m/s]"},
    {"network.capacity", "0.15", "edge outflow capacity [veh/s]"},
    {"network.hex_size", "200", "hexagonal cell size [m]"},
};
const std::vector<Param> kDemandParams{
    {"demand.agents", "200", "number of agents"},
    {"demand.window", "300", "departure window [s]"},
};
const std::vector<Param> kPathParams{{"paths.k", "4", "candidate paths per agent"}};
const std::vector<Param> kSamplerParams{
    {"sampler.resolution", "8", "simplex grid resolution g"},
    {"sampler.count", "150", "number of sampled assignments"},
    {"sampler.zero_mass", "uniform", "agents with no mass on valid ranks: uniform | error"},
};
const std::vector<Param> kSimParams{
    {"sim.sim_step", "1", "simulation step [s]"},
    {"sim.interval", "10", "aggregation interval [s]"},
    {"sim.horizon", "600", "simulation horizon [s]"},
};
const std::vector<Param> kDatasetParams{
    {"dataset.flow_window", "12", "flow window length"},
    {"dataset.assign_window", "12", "assignment window length"},
    {"dataset.train", "0.7", "train fraction"},
    {"dataset.val", "0.1", "validation fraction"},
    {"dataset.test", "0.2", "test fraction"},
};
const std::vector<Param> kTrainParams{
    {"model.hidden", "64", "hidden width"},
    {"model.residual_channels", "32", "flow-branch channels"},
    {"model.blocks", "2", "flow-branch blocks"},
    {"model.fusion", "attention", "fusion: attention | concat"},
    {"model.recurrent", "lstm", "recurrent cell: lstm | gru"},
    {"train.lr", "0.001", "learning rate"},
    {"train.batch_size", "128", "batch size"},
    {"train.max_epochs", "100", "maximum epochs"},
    {"train.patience", "10", "early-stopping patience"},
    {"train.gate_weight", "0.1", "gate loss weight"},
    {"train.clip_norm", "5", "gradient clipping norm"},
};
const std::vector<Param> kBenchParams{
    {"bench.count", "10", "assignments to time"},
    {"bench.repeats", "3", "timing repeats per assignment (best kept)"},
};

std::string flag_of(const std::string& key) {
    std::string name = key.substr(key.find('.') + 1);
    std::replace(name.begin(), name.end(), '_', '-');
    return "--" + name;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

void flatten(const nlohmann::json& j, const std::string& prefix, std::map<std::string, std::string>& out) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    } else if (j.is_string()) {
        out[prefix] = j.get<std::string>();
    } else {
        out[prefix] = j.dump();
    }
}

/// JSON (nested sections) or `key = value` lines with optional [section] headers.
std::map<std::string, std::string> read_config(const fs::path& file) {
    if (!fs::exists(file)) throw ValidationError("config file not found: " + file.string());
    const std::string text = csv::read_text(file);
    std::map<std::string, std::string> out;
    if (trim(text).starts_with("{")) {
        try {
            flatten(nlohmann::json::parse(text), "", out);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("config " + file.string() + ": " + e.what());
        }
        return out;
    }
    std::istringstream in(text);
    std::string line, section;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config " + file.string() + ":" + std::to_string(n) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        out[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::set<std::string> known_keys() {
    std::set<std::string> keys{"seed", "workers"};
    for (const auto* list : {&kNetParams, &kDemandParams, &kPathParams, &kSamplerParams, &kSimParams, &kDatasetParams,
                             &kTrainParams, &kBenchParams}) {
        for (const auto& p : *list) keys.insert(p.key);
    }
    return keys;
}

// ---------------------------------------------------------------- stage context

struct Values {
    ojson config = ojson::object();

    std::string str(const std::string& key) const { return config.at(key).get<std::string>(); }
    double real(const std::string& key) const {
        const auto s = str(key);
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used == s.size()) return v;
        } catch (const std::exception&) {
        }
        throw ValidationError(key + ": expected a number, got '" + s + "'");
    }
    long long integer(const std::string& key) const {
        const auto s = str(key);
        try {
            std::size_t used = 0;
            const long long v = std::stoll(s, &used);
            if (used == s.size()) return v;
        } catch (const std::exception&) {
        }
        throw ValidationError(key + ": expected an integer, got '" + s + "'");
    }
    std::size_t count(const std::string& key) const {
        const auto v = integer(key);
        if (v < 0) throw ValidationError(key + ": must be nonnegative");
        return static_cast<std::size_t>(v);
    }
};

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex;
    s.width(16);
    s.fill('0');
    s << v;
    return s.str();
}

class Experiment {
public:
    explicit Experiment(fs::path root) : root_(std::move(root)), file_(root_ / "manifest.json") {
        if (fs::exists(file_)) {
            try {
                manifest_ = ojson::parse(csv::read_text(file_));
            } catch (const nlohmann::json::exception& e) {
                throw LoadError(file_.string() + ": " + e.what());
            }
        } else {
            manifest_ = {{"tool", kTool}, {"version", kVersion}, {"stages", ojson::object()}};
        }
    }

    const fs::path& root() const { return root_; }
    const fs::path& file() const { return file_; }
    bool exists() const { return fs::exists(file_); }

    const ojson* stage(const std::string& name) const {
        const auto& stages = manifest_.at("stages");
        const auto it = stages.find(name);
        return it == stages.end() ? nullptr : &*it;
    }

    /// Throws unless every upstream stage completed and none is stale.
    void require(const std::vector<std::string>& upstream, const std::map<std::string, std::string>& commands,
                 bool force) const {
        for (const auto& u : upstream) {
            if (!exists()) {
                throw ValidationError("missing experiment manifest " + file_.string() + "; run `" + commands.at(u) +
                                      "` first");
            }
            const ojson* s = stage(u);
            if (!s || !s->at("complete").get<bool>()) {
                throw ValidationError("stage '" + u + "' is not recorded as complete in " + file_.string() +
                                      "; run `" + commands.at(u) + "` first");
            }
            if (!force) check_fresh(u, commands);
        }
    }

    std::string hash_of(const std::string& name) const { return stage(name)->at("config_hash").get<std::string>(); }

    void begin(const std::string& name) {
        auto& stages = manifest_["stages"];
        if (stages.contains(name)) stages[name]["complete"] = false;
        save();
    }

    void complete(const std::string& name, const ojson& config, const std::vector<std::string>& upstream,
                  const std::vector<std::string>& outputs) {
        ojson up = ojson::object();
        for (const auto& u : upstream) up[u] = hash_of(u);
        ojson entry;
        entry["config"] = config;
        entry["upstream"] = up;
        entry["config_hash"] = hex(fnv1a(config.dump() + up.dump()));
        entry["outputs"] = outputs;
        entry["complete"] = true;
        manifest_["stages"][name] = entry;
        save();
    }

private:
    void check_fresh(const std::string& name, const std::map<std::string, std::string>& commands) const {
        const ojson* s = stage(name);
        for (const auto& [u, h] : s->at("upstream").items()) {
            const ojson* us = stage(u);
            if (!us || us->at("config_hash").get<std::string>() != h.get<std::string>()) {
                const auto cmd = commands.count(name) ? commands.at(name) : name;
                throw ValidationError("stage '" + name + "' was built from a different '" + u +
                                      "' (config hash mismatch); rerun `" + cmd + " --force` or pass --force");
            }
            check_fresh(u, commands);
        }
    }

    void save() const {
        fs::create_directories(root_);
        csv::write_text(file_, manifest_.dump(2) + "\n");
    }

    fs::path root_;
    fs::path file_;
    ojson manifest_;
};

const std::map<std::string, std::string> kCommands{
    {"net", "net gen"},
    {"demand", "demand gen"},
    {"paths", "paths build"},
    {"sample", "sample grid"},
    {"simulate", "simulate batch"},
    {"dataset", "dataset build"},
    {"train", "train"},
    {"train_flow_only", "train --variant flow-only"},
};

struct Context {
    fs::path out;
    Values values;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    bool force = false;
    std::ostream* log = nullptr;
    Experiment* exp = nullptr;
};

/// Refuses to overwrite existing outputs unless forced; removes them when forced.
void claim_outputs(const Context& ctx, const std::vector<std::string>& outputs) {
    for (const auto& o : outputs) {
        const fs::path p = ctx.out / o;
        if (!fs::exists(p)) continue;
        if (!ctx.force) throw ValidationError(p.string() + " already exists; pass --force to overwrite");
        fs::remove_all(p);
    }
}

ojson stage_config(const Context& ctx, const std::string& key) {
    return ctx.exp->stage(key)->at("config");
}

std::size_t config_count(const Context& ctx, const std::string& stage, const std::string& key) {
    Values v;
    v.config = stage_config(ctx, stage);
    return v.count(key);
}

SimConfig sim_config(const Values& v) {
    SimConfig cfg{v.real("sim.sim_step"), v.real("sim.interval"), v.real("sim.horizon")};
    validate(cfg);
    return cfg;
}

struct Inputs {
    RoadNetwork net;
    CellMap cmap;
    Demand demand;
    ChoiceSets sets;
};

Inputs load_inputs(const Context& ctx) {
    Inputs in;
    in.net = load_network(ctx.out / "network");
    in.cmap = load_cell_map(ctx.out / "network" / "cells.csv");
    in.demand = load_demand(ctx.out / "demand" / "demand.csv");
    in.sets = load_choice_sets(ctx.out / "paths" / "choice_sets.txt", in.demand.size(),
                               config_count(ctx, "paths", "paths.k"));
    return in;
}

std::vector<SampleSpec> load_plan(const Context& ctx) {
    const int g = static_cast<int>(config_count(ctx, "sample", "sampler.resolution"));
    return load_sampling_manifest(ctx.out / "samples" / "sampling.csv", g);
}

fs::path assignment_file(const Context& ctx, std::size_t id) {
    return ctx.out / "samples" / "assignments" / (std::to_string(id) + ".csv");
}

std::string variant_suffix(const std::string& variant) {
    if (variant == "full") return "";
    if (variant == "flow-only") return "_flow_only";
    throw ValidationError("variant must be 'full' or 'flow-only', got '" + variant + "'");
}

// ---------------------------------------------------------------- stages

void net_gen(Context& ctx) {
    const auto& v = ctx.values;
    const auto net = synth_grid_network(static_cast<int>(v.integer("network.rows")),
                                        static_cast<int>(v.integer("network.cols")), v.real("network.edge_length"),
                                        v.real("network.speed"), v.real("network.capacity"));
    const auto cmap = build_cell_map(net, v.real("network.hex_size"));
    save_network(net, ctx.out / "network");
    save_cell_map(net, cmap, ctx.out / "network" / "cells.csv");
    *ctx.log << "net gen: " << net.node_count() << " nodes, " << net.edge_count() << " edges, " << cmap.cell_count
             << " cells -> " << (ctx.out / "network").string() << "\n";
}

void demand_gen(Context& ctx) {
    const auto net = load_network(ctx.out / "network");
    const auto demand = gen_demand(net, ctx.values.count("demand.agents"), ctx.values.real("demand.window"),
                                   stage_seed(ctx.seed, "demand"));
    fs::create_directories(ctx.out / "demand");
    save_demand(demand, ctx.out / "demand" / "demand.csv");
    *ctx.log << "demand gen: " << demand.size() << " trips\n";
}

void paths_build(Context& ctx) {
    const auto net = load_network(ctx.out / "network");
    const auto demand = load_demand(ctx.out / "demand" / "demand.csv");
    const auto sets = build_choice_sets(net, demand, ctx.values.count("paths.k"));
    fs::create_directories(ctx.out / "paths");
    save_choice_sets(sets, ctx.out / "paths" / "choice_sets.txt");
    *ctx.log << "paths build: " << sets.size() << " choice sets\n";
}

void sample_grid(Context& ctx) {
    const auto in = load_inputs(ctx);
    const auto& v = ctx.values;
    const std::string zm = v.str("sampler.zero_mass");
    if (zm != "uniform" && zm != "error") throw ValidationError("sampler.zero_mass must be 'uniform' or 'error'");
    const auto plan = plan_grid_samples(config_count(ctx, "paths", "paths.k"),
                                        static_cast<int>(v.integer("sampler.resolution")), v.count("sampler.count"),
                                        stage_seed(ctx.seed, "sample"));
    const auto assignments =
        realize_assignments(in.sets, plan, zm == "uniform" ? ZeroMass::UniformOverValid : ZeroMass::Error);
    fs::create_directories(ctx.out / "samples" / "assignments");
    save_sampling_manifest(plan, ctx.out / "samples" / "sampling.csv");
    for (std::size_t i = 0; i < plan.size(); ++i) save_assignment(assignments[i], assignment_file(ctx, plan[i].sample_id));
    *ctx.log << "sample grid: " << plan.size() << " assignments\n";
}

void simulate_batch_stage(Context& ctx) {
    const auto in = load_inputs(ctx);
    const auto plan = load_plan(ctx);
    const auto cfg = sim_config(ctx.values);
    std::vector<Assignment> assignments;
    for (const auto& s : plan) assignments.push_back(load_assignment(assignment_file(ctx, s.sample_id)));
    const auto results = simulate_batch(in.net, in.demand, in.sets, assignments, in.cmap, cfg, ctx.workers);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        save_sim_result(results[i], plan[i].sample_id, ctx.out / "sims" / std::to_string(plan[i].sample_id));
    }
    *ctx.log << "simulate batch: " << results.size() << " runs on " << ctx.workers << " worker(s)\n";
}

void dataset_build(Context& ctx) {
    const auto in = load_inputs(ctx);
    const auto plan = load_plan(ctx);
    Values simv;
    simv.config = stage_config(ctx, "simulate");
    const auto sim = sim_config(simv);
    const auto& v = ctx.values;
    Dataset ds;
    ds.spec = {in.cmap.cell_count, sim.interval, v.count("dataset.flow_window"), v.count("dataset.assign_window")};
    validate(ds.spec);
    for (const auto& s : plan) {
        const auto result = load_sim_result(ctx.out / "sims" / std::to_string(s.sample_id));
        const auto a = assignment_matrix(in.demand, in.sets, load_assignment(assignment_file(ctx, s.sample_id)),
                                         in.cmap, result.flows.cols(), sim.interval);
        ds.runs.push_back({static_cast<std::int64_t>(s.sample_id), a.counts, result.flows, result.total_travel_time});
    }
    ds.split = split_runs(ds.runs.size(), {v.real("dataset.train"), v.real("dataset.val"), v.real("dataset.test")},
                          stage_seed(ctx.seed, "split"));
    save_dataset(ds, ctx.out / "dataset");
    *ctx.log << "dataset build: " << ds.runs.size() << " runs (" << ds.split.train.size() << "/"
             << ds.split.val.size() << "/" << ds.split.test.size() << ")\n";
}

Dataset load_experiment_dataset(const Context& ctx) {
    const fs::path manifest = ctx.out / "dataset" / "manifest.json";
    if (!fs::exists(manifest)) {
        throw ValidationError("missing dataset manifest " + manifest.string() + "; run `dataset build` first");
    }
    return load_dataset(ctx.out / "dataset");
}

void write_metrics(const Model& model, const Dataset& ds, const fs::path& file) {
    std::ostringstream out;
    out << "split,mae,rmse,persistence_mae,persistence_rmse\n";
    auto row = [&](const char* name, const std::vector<std::size_t>& runs) {
        if (runs.empty()) return;
        const auto m = evaluate_split(model, ds, runs);
        const auto p = persistence_split(ds, runs);
        out << name << ',' << csv::format(m.mae) << ',' << csv::format(m.rmse) << ',' << csv::format(p.mae) << ','
            << csv::format(p.rmse) << '\n';
    };
    row("val", ds.split.val);
    row("test", ds.split.test);
    csv::write_text(file, out.str());
}

void train_stage(Context& ctx, const std::string& variant) {
    const auto ds = load_experiment_dataset(ctx);
    const auto in = load_inputs(ctx);
    const auto& v = ctx.values;
    ModelConfig mc;
    mc.hidden = v.count("model.hidden");
    mc.residual_channels = v.count("model.residual_channels");
    mc.blocks = v.count("model.blocks");
    mc.fusion = parse_fusion(v.str("model.fusion"));
    mc.recurrent = parse_recurrent(v.str("model.recurrent"));
    mc.use_assignment = variant == "full";
    mc = fit_model_config(mc, ds);
    TrainConfig tc;
    tc.lr = v.real("train.lr");
    tc.batch_size = v.count("train.batch_size");
    tc.max_epochs = v.count("train.max_epochs");
    tc.patience = v.count("train.patience");
    tc.gate_weight = v.real("train.gate_weight");
    tc.clip_norm = v.real("train.clip_norm");
    tc.seed = stage_seed(ctx.seed, "train");
    const auto adjacency = build_cell_graph(in.net, in.cmap).adjacency;
    const auto result = train(ds, adjacency, mc, tc, [&](const EpochRecord& e) {
        *ctx.log << "epoch " << e.epoch << " train_loss " << csv::format(e.train_loss) << " val_mae "
                 << csv::format(e.val_mae) << "\n";
    });
    const fs::path dir = ctx.out / ("model" + variant_suffix(variant));
    result.model.save(dir);
    save_train_report(result.report, dir / "report.csv");
    write_metrics(result.model, ds, dir / "metrics.csv");
    *ctx.log << "train: best epoch " << result.report.best_epoch << " val_mae "
             << csv::format(result.report.best_val_mae) << " -> " << dir.string() << "\n";
}

const std::vector<std::size_t>& split_of(const Dataset& ds, const std::string& name) {
    if (name == "train") return ds.split.train;
    if (name == "val") return ds.split.val;
    if (name == "test") return ds.split.test;
    throw ValidationError("split must be train, val or test, got '" + name + "'");
}

void eval_tt_stage(Context& ctx, const std::string& variant, const std::string& split) {
    const auto ds = load_experiment_dataset(ctx);
    const auto model = Model::load(ctx.out / ("model" + variant_suffix(variant)));
    const auto report = evaluate_tt(model, ds, split_of(ds, split), ctx.workers);
    const fs::path dir = variant == "full" ? ctx.out / "eval" : ctx.out / "eval" / "flow_only";
    fs::create_directories(dir);
    save_tt_report(report, dir);
    *ctx.log << "eval tt: " << report.rows.size() << " assignments, spearman " << csv::format(report.spearman)
             << ", median relative dTT " << csv::format(report.median_rel_delta) << "\n";
}

void eval_trace_stage(Context& ctx, const std::string& variant, std::size_t cell, long long run_id) {
    const auto ds = load_experiment_dataset(ctx);
    const auto model = Model::load(ctx.out / ("model" + variant_suffix(variant)));
    std::optional<std::size_t> index;
    if (run_id < 0) {
        if (ds.split.test.empty()) throw ValidationError("eval trace: test split is empty; pass --run");
        index = ds.split.test.front();
    } else {
        for (std::size_t i = 0; i < ds.runs.size(); ++i) {
            if (ds.runs[i].sim_id == run_id) index = i;
        }
        if (!index) throw ValidationError("eval trace: no run with sample id " + std::to_string(run_id));
    }
    const auto trace = node_trace(model, ds.runs[*index], cell);
    fs::create_directories(ctx.out / "eval");
    save_node_trace(trace, ctx.out / "eval");
    *ctx.log << "eval trace: cell " << cell << " of run " << ds.runs[*index].sim_id << "\n";
}

void eval_ablation_stage(Context& ctx, const std::string& split) {
    const auto ds = load_experiment_dataset(ctx);
    const auto full = Model::load(ctx.out / "model");
    const auto flow = Model::load(ctx.out / "model_flow_only");
    const auto report = ablation_compare(full, flow, ds, split_of(ds, split), ctx.workers);
    fs::create_directories(ctx.out / "eval");
    save_ablation(report, ctx.out / "eval");
    *ctx.log << "eval ablation: full mae " << csv::format(report.full_metrics.mae) << ", flow-only mae "
             << csv::format(report.flow_only_metrics.mae) << ", flow-only TT variance "
             << csv::format(report.flow_only_tt_variance) << "\n";
}

void bench_speed_stage(Context& ctx) {
    const auto ds = load_experiment_dataset(ctx);
    const auto in = load_inputs(ctx);
    const auto model = Model::load(ctx.out / "model");
    Values simv;
    simv.config = stage_config(ctx, "simulate");
    const auto sim = sim_config(simv);
    const std::size_t count = ctx.values.count("bench.count");
    std::vector<Assignment> assignments;
    for (std::size_t i : ds.split.test) {
        if (assignments.size() == count) break;
        assignments.push_back(load_assignment(assignment_file(ctx, static_cast<std::size_t>(ds.runs[i].sim_id))));
    }
    const auto report = speed_bench(model, in.net, in.cmap, in.demand, in.sets, assignments, sim,
                                    ctx.values.count("bench.repeats"));
    fs::create_directories(ctx.out / "bench");
    save_speed(report, ctx.out / "bench");
    *ctx.log << "bench speed: simulator " << csv::format(report.median_simulator) << " s, surrogate "
             << csv::format(report.median_surrogate) << " s, median ratio " << csv::format(report.median_ratio)
             << "\n";
}

// ---------------------------------------------------------------- wiring

struct Leaf {
    CLI::App* app = nullptr;
    std::string stage;  // manifest key; may be refined by options
    std::vector<Param> params;
    std::map<std::string, std::string> flags;
    std::string config_file;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    bool force = false;
};

void add_common(Leaf& leaf, bool with_workers) {
    leaf.app->add_option("--config", leaf.config_file, "config file (JSON or key = value)");
    leaf.app->add_option("--seed", leaf.seed, "root seed");
    leaf.app->add_option("--out", leaf.out, "experiment directory")->required();
    leaf.app->add_flag("--force", leaf.force, "overwrite outputs and ignore upstream hash mismatches");
    if (with_workers) leaf.app->add_option("--workers", leaf.workers, "worker threads");
    for (const auto& p : leaf.params) leaf.app->add_option(flag_of(p.key), leaf.flags[p.key], p.help);
}

std::size_t default_workers() {
    if (const char* env = std::getenv("ASSIGN_SURROGATE_WORKERS")) {
        try {
            const long long v = std::stoll(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        throw ValidationError("ASSIGN_SURROGATE_WORKERS must be a positive integer");
    }
    return 1;
}

Context make_context(Leaf& leaf, Experiment& exp, std::ostream& log) {
    std::map<std::string, std::string> file_values;
    if (!leaf.config_file.empty()) {
        file_values = read_config(leaf.config_file);
        const auto known = known_keys();
        for (const auto& [k, _] : file_values) {
            if (!known.count(k)) throw ValidationError("config " + leaf.config_file + ": unknown key '" + k + "'");
        }
    }
    Context ctx;
    ctx.out = leaf.out;
    ctx.force = leaf.force;
    ctx.log = &log;
    ctx.exp = &exp;
    std::string seed_text = file_values.count("seed") ? file_values["seed"] : "0";
    if (leaf.seed) seed_text = std::to_string(*leaf.seed);
    try {
        std::size_t used = 0;
        ctx.seed = std::stoull(seed_text, &used);
        if (used != seed_text.size()) throw std::invalid_argument("seed");
    } catch (const std::exception&) {
        throw ValidationError("seed must be a nonnegative integer, got '" + seed_text + "'");
    }
    ctx.values.config["seed"] = std::to_string(ctx.seed);
    for (const auto& p : leaf.params) {
        const auto opt = leaf.app->get_option(flag_of(p.key));
        std::string value = p.fallback;
        if (opt->count() > 0) {
            value = leaf.flags[p.key];
        } else if (file_values.count(p.key)) {
            value = file_values[p.key];
        }
        ctx.values.config[p.key] = value;
    }
    if (leaf.workers) {
        if (*leaf.workers < 1) throw ValidationError("--workers must be >= 1");
        ctx.workers = *leaf.workers;
    } else if (file_values.count("workers")) {
        ctx.workers = std::max<long long>(1, std::stoll(file_values["workers"]));
    } else {
        ctx.workers = default_workers();
    }
    return ctx;
}

void run_stage(Leaf& leaf, const std::vector<std::string>& upstream, const std::vector<std::string>& outputs,
               const std::function<void(Context&)>& body, std::ostream& log) {
    Experiment exp(leaf.out);
    Context ctx = make_context(leaf, exp, log);
    exp.require(upstream, kCommands, ctx.force);
    claim_outputs(ctx, outputs);
    exp.begin(leaf.stage);
    body(ctx);
    exp.complete(leaf.stage, ctx.values.config, upstream, outputs);
}

/// Most specific subcommand named on the command line.
const CLI::App& deepest(const CLI::App& app) {
    const CLI::App* cur = &app;
    for (;;) {
        const auto subs = cur->get_subcommands();
        if (subs.empty()) return *cur;
        cur = subs.front();
    }
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Assignment-aware travel-time surrogate pipeline", kTool};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::vector<std::unique_ptr<Leaf>> leaves;
    std::function<void()> action;
    auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& help, std::string stage,
                    std::vector<Param> params, bool workers) -> Leaf& {
        auto l = std::make_unique<Leaf>();
        l->app = parent->add_subcommand(name, help);
        l->stage = std::move(stage);
        l->params = std::move(params);
        add_common(*l, workers);
        leaves.push_back(std::move(l));
        return *leaves.back();
    };
    auto group = [&](const std::string& name, const std::string& help) {
        auto* g = app.add_subcommand(name, help);
        g->require_subcommand(1);
        return g;
    };

    auto& net = leaf(group("net", "road network"), "gen", "generate a grid network and cell map", "net", kNetParams, false);
    net.app->callback([&] { action = [&] { run_stage(net, {}, {"network"}, net_gen, out); }; });

    auto& demand = leaf(group("demand", "travel demand"), "gen", "generate agents", "demand", kDemandParams, false);
    demand.app->callback([&] { action = [&] { run_stage(demand, {"net"}, {"demand"}, demand_gen, out); }; });

    auto& paths = leaf(group("paths", "choice sets"), "build", "build K shortest paths per agent", "paths", kPathParams,
                       false);
    paths.app->callback([&] { action = [&] { run_stage(paths, {"demand"}, {"paths"}, paths_build, out); }; });

    auto& sample = leaf(group("sample", "assignment sampling"), "grid", "sample assignments on the simplex grid",
                        "sample", kSamplerParams, false);
    sample.app->callback([&] { action = [&] { run_stage(sample, {"paths"}, {"samples"}, sample_grid, out); }; });

    auto& simulate = leaf(group("simulate", "simulation"), "batch", "simulate every sampled assignment", "simulate",
                          kSimParams, true);
    simulate.app->callback(
        [&] { action = [&] { run_stage(simulate, {"sample"}, {"sims"}, simulate_batch_stage, out); }; });

    auto& dataset = leaf(group("dataset", "training data"), "build", "assemble runs and split", "dataset",
                         kDatasetParams, false);
    dataset.app->callback(
        [&] { action = [&] { run_stage(dataset, {"simulate"}, {"dataset"}, dataset_build, out); }; });

    std::string train_variant = "full";
    auto& trn = leaf(&app, "train", "train the surrogate", "train", kTrainParams, false);
    trn.app->add_option("--variant", train_variant, "full | flow-only");
    trn.app->callback([&] {
        action = [&] {
            const auto suffix = variant_suffix(train_variant);
            trn.stage = "train" + suffix;
            run_stage(trn, {"dataset"}, {"model" + suffix}, [&](Context& c) { train_stage(c, train_variant); }, out);
        };
    });

    auto* eval = group("eval", "evaluation");
    std::string tt_variant = "full", tt_split = "test";
    auto& ett = leaf(eval, "tt", "rollout travel-time report", "eval_tt", {}, true);
    ett.app->add_option("--variant", tt_variant, "full | flow-only");
    ett.app->add_option("--split", tt_split, "train | val | test");
    ett.app->callback([&] {
        action = [&] {
            const auto suffix = variant_suffix(tt_variant);
            ett.stage = "eval_tt" + suffix;
            const std::vector<std::string> outputs =
                suffix.empty() ? std::vector<std::string>{"eval/tt_report.csv", "eval/tt_summary.csv"}
                               : std::vector<std::string>{"eval/flow_only"};
            run_stage(ett, {"train" + suffix}, outputs, [&](Context& c) { eval_tt_stage(c, tt_variant, tt_split); },
                      out);
        };
    });

    std::string trace_variant = "full";
    std::size_t trace_cell = 0;
    long long trace_run = -1;
    auto& etr = leaf(eval, "trace", "true and predicted series of one cell", "eval_trace", {}, false);
    etr.app->add_option("--cell", trace_cell, "cell index")->required();
    etr.app->add_option("--run", trace_run, "sample id (default: first test run)");
    etr.app->add_option("--variant", trace_variant, "full | flow-only");
    etr.app->callback([&] {
        action = [&] {
            const auto suffix = variant_suffix(trace_variant);
            etr.stage = "eval_trace_" + std::to_string(trace_cell) + suffix;
            run_stage(etr, {"train" + suffix}, {"eval/trace_" + std::to_string(trace_cell) + ".csv"},
                      [&](Context& c) { eval_trace_stage(c, trace_variant, trace_cell, trace_run); }, out);
        };
    });

    std::string abl_split = "test";
    auto& eab = leaf(eval, "ablation", "full vs flow-only comparison", "eval_ablation", {}, true);
    eab.app->add_option("--split", abl_split, "train | val | test");
    eab.app->callback([&] {
        action = [&] {
            run_stage(eab, {"train", "train_flow_only"}, {"eval/ablation.csv"},
                      [&](Context& c) { eval_ablation_stage(c, abl_split); }, out);
        };
    });

    auto& bench = leaf(group("bench", "benchmarks"), "speed", "simulator vs surrogate timing", "bench", kBenchParams,
                       false);
    bench.app->callback(
        [&] { action = [&] { run_stage(bench, {"train", "simulate"}, {"bench"}, bench_speed_stage, out); }; });

    // Name unknown subcommands explicitly; CLI11 would only report a missing one.
    const CLI::App* level = &app;
    for (const auto& word : args) {
        if (word.starts_with("-") || level->get_subcommands({}).empty()) break;
        const CLI::App* next = level->get_subcommand_no_throw(word);
        if (!next) {
            err << "error: unknown subcommand '" << word << "'\n\n" << level->help();
            return 1;
        }
        level = next;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << deepest(app).help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << deepest(app).help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << deepest(app).help();
        return 1;
    }
    try {
        if (action) action();
        return 0;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const RuntimeFailure& e) {
        err << "failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace surrogate
