#include "assign_surrogate/model.hpp"

#include <cmath>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"
#include "json.hpp"

namespace surrogate {

using ad::Tensor;

Fusion parse_fusion(const std::string& s) {
    if (s == "concat") return Fusion::Concat;
    if (s == "attention") return Fusion::Attention;
    throw ValidationError("unknown fusion mode '" + s + "' (expected concat or attention)");
}

Recurrent parse_recurrent(const std::string& s) {
    if (s == "lstm") return Recurrent::Lstm;
    if (s == "gru") return Recurrent::Gru;
    throw ValidationError("unknown recurrent cell '" + s + "' (expected lstm or gru)");
}

std::string to_string(Fusion f) { return f == Fusion::Concat ? "concat" : "attention"; }
std::string to_string(Recurrent r) { return r == Recurrent::Lstm ? "lstm" : "gru"; }

std::size_t receptive_field(const ModelConfig& cfg) {
    std::size_t rf = 1;
    for (std::size_t l = 0; l < cfg.blocks; ++l) rf += std::size_t{1} << l;
    return rf;
}

void validate(const ModelConfig& cfg) {
    if (cfg.cells == 0) throw ValidationError("model: cells must be positive");
    if (cfg.hidden == 0 || cfg.residual_channels == 0) throw ValidationError("model: widths must be positive");
    if (cfg.blocks == 0) throw ValidationError("model: at least one flow block is required");
    if (cfg.assign_window < 1) throw ValidationError("model: assignment window must be >= 1");
    if (cfg.flow_window < receptive_field(cfg)) {
        throw ValidationError("model: flow window " + std::to_string(cfg.flow_window) +
                              " is shorter than the receptive field " + std::to_string(receptive_field(cfg)));
    }
    if (!(cfg.interval > 0) || !(cfg.flow_scale > 0) || !(cfg.assign_scale > 0)) {
        throw ValidationError("model: interval and scales must be positive");
    }
    if (cfg.gate_weight < 0) throw ValidationError("model: gate weight must be nonnegative");
}

namespace {

void check_window(const RealMatrix& w, std::size_t len, std::size_t cells, const char* what) {
    if (w.rows() != len || w.cols() != cells) {
        throw ValidationError(std::string(what) + " window is " + std::to_string(w.rows()) + "x" +
                              std::to_string(w.cols()) + ", expected " + std::to_string(len) + "x" +
                              std::to_string(cells));
    }
}

Tensor stack_windows(const std::vector<const RealMatrix*>& windows, std::size_t len, std::size_t cells) {
    const std::size_t b = windows.size();
    std::vector<double> v(len * b * cells);
    for (std::size_t k = 0; k < b; ++k) {
        for (std::size_t tau = 0; tau < len; ++tau) {
            std::copy_n(windows[k]->row(tau), cells, v.data() + (tau * b + k) * cells);
        }
    }
    return Tensor::constant({len * b * cells, 1}, std::move(v));
}

}  // namespace

Batch make_batch(const std::vector<const Sample*>& samples, const ModelConfig& cfg) {
    std::vector<const RealMatrix*> a, q;
    for (const Sample* s : samples) {
        check_window(s->assign_window, cfg.assign_window, cfg.cells, "assignment");
        check_window(s->flow_window, cfg.flow_window, cfg.cells, "flow");
        a.push_back(&s->assign_window);
        q.push_back(&s->flow_window);
    }
    return {samples.size(), stack_windows(q, cfg.flow_window, cfg.cells),
            stack_windows(a, cfg.assign_window, cfg.cells)};
}

Batch make_batch(const RealMatrix& assign_window, const RealMatrix& flow_window, const ModelConfig& cfg) {
    check_window(assign_window, cfg.assign_window, cfg.cells, "assignment");
    check_window(flow_window, cfg.flow_window, cfg.cells, "flow");
    return {1, stack_windows({&flow_window}, cfg.flow_window, cfg.cells),
            stack_windows({&assign_window}, cfg.assign_window, cfg.cells)};
}

Model::Model(ModelConfig cfg, RealMatrix adjacency, std::uint64_t seed) : cfg_(cfg), adj_(std::move(adjacency)) {
    validate(cfg_);
    if (adj_.rows() != cfg_.cells || adj_.cols() != cfg_.cells) {
        throw ValidationError("model: adjacency must be " + std::to_string(cfg_.cells) + "x" +
                              std::to_string(cfg_.cells));
    }
    Rng rng(seed);
    const std::size_t c = cfg_.residual_channels, d = cfg_.hidden;
    const std::size_t tail = cfg_.flow_window - receptive_field(cfg_) + 1;
    add_param("flow.start.w", {1, c}, false, rng);
    add_param("flow.start.b", {c}, true, rng);
    for (std::size_t l = 0; l < cfg_.blocks; ++l) {
        const std::string p = "flow.block" + std::to_string(l);
        add_param(p + ".conv.w", {2 * c, 2 * c}, false, rng);
        add_param(p + ".conv.b", {2 * c}, true, rng);
        add_param(p + ".graph.w", {c, c}, false, rng);
        add_param(p + ".graph.b", {c}, true, rng);
        add_param(p + ".skip.w", {tail * c, d}, false, rng);
    }
    add_param("flow.skip.b", {d}, true, rng);
    add_param("flow.end.w", {d, d}, false, rng);
    add_param("flow.end.b", {d}, true, rng);

    const std::size_t gates = cfg_.recurrent == Recurrent::Lstm ? 4 : 3;
    add_param("assign.encoder.w", {1, d}, false, rng);
    add_param("assign.encoder.b", {d}, true, rng);
    add_param("assign.rnn.wx", {d, gates * d}, false, rng);
    add_param("assign.rnn.wh", {d, gates * d}, false, rng);
    add_param("assign.rnn.b", {gates * d}, true, rng);

    const std::size_t fused = 2 * d;
    add_param("decoder.fc1.w", {fused, d}, false, rng);
    add_param("decoder.fc1.b", {d}, true, rng);
    add_param("decoder.fc2.w", {d, d}, false, rng);
    add_param("decoder.fc2.b", {d}, true, rng);
    add_param("decoder.skip.w", {fused, d}, false, rng);
    add_param("decoder.magnitude.w", {d, 1}, false, rng);
    add_param("decoder.magnitude.b", {1}, true, rng);
    add_param("decoder.gate.w", {d, 1}, false, rng);
    add_param("decoder.gate.b", {1}, true, rng);
}

void Model::add_param(const std::string& name, ad::Shape shape, bool bias, Rng& rng) {
    std::vector<double> v(ad::numel(shape), 0.0);
    if (!bias) {
        const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
        for (auto& x : v) x = rng.uniform(-limit, limit);
    }
    index_[name] = params_.size();
    params_.emplace_back(name, Tensor::parameter(std::move(shape), std::move(v)));
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_) out.push_back(t);
    return out;
}

Tensor& Model::param(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("model: no parameter named " + name);
    return params_[it->second].second;
}

const Tensor& Model::param(const std::string& name) const { return const_cast<Model*>(this)->param(name); }

Tensor Model::flow_branch(const Tensor& flow, std::size_t rows) const {
    const std::size_t c = cfg_.residual_channels;
    const std::size_t tail = cfg_.flow_window - receptive_field(cfg_) + 1;
    if (flow.rows() != cfg_.flow_window * rows || flow.cols() != 1) {
        throw ValidationError("flow_branch: input " + ad::to_string(flow.shape()) + " does not hold " +
                              std::to_string(cfg_.flow_window) + " windows of " + std::to_string(rows) + " rows");
    }
    Tensor h = ad::add(ad::matmul(ad::scale(flow, 1.0 / cfg_.flow_scale), param("flow.start.w")),
                       param("flow.start.b"));
    std::size_t len = cfg_.flow_window;
    Tensor skip;
    for (std::size_t l = 0; l < cfg_.blocks; ++l) {
        const std::string p = "flow.block" + std::to_string(l);
        const std::size_t dil = std::size_t{1} << l;
        Tensor prev = ad::slice_rows(h, 0, (len - dil) * rows);
        Tensor cur = ad::slice_rows(h, dil * rows, len * rows);
        Tensor z = ad::add(ad::matmul(ad::concat_last({prev, cur}), param(p + ".conv.w")), param(p + ".conv.b"));
        Tensor y = ad::mul(ad::tanh(ad::slice_last(z, 0, c)), ad::sigmoid(ad::slice_last(z, c, 2 * c)));
        Tensor g = ad::add(ad::matmul(ad::block_left_matmul(adj_, y), param(p + ".graph.w")), param(p + ".graph.b"));
        h = ad::add(g, cur);
        len -= dil;
        Tensor s = ad::matmul(ad::fold_rows(ad::slice_rows(h, (len - tail) * rows, len * rows), tail),
                              param(p + ".skip.w"));
        skip = skip ? ad::add(skip, s) : s;
    }
    return ad::add(ad::matmul(ad::relu(ad::add(skip, param("flow.skip.b"))), param("flow.end.w")),
                   param("flow.end.b"));
}

AssignFeatures Model::assignment_branch(const Tensor& assign, std::size_t rows) const {
    const std::size_t d = cfg_.hidden, w = cfg_.assign_window;
    if (assign.rows() != w * rows || assign.cols() != 1) {
        throw ValidationError("assignment_branch: input " + ad::to_string(assign.shape()) + " does not hold " +
                              std::to_string(w) + " windows of " + std::to_string(rows) + " rows");
    }
    Tensor x = ad::scale(assign, 1.0 / cfg_.assign_scale);
    Tensor e = ad::tanh(
        ad::add(ad::block_left_matmul(adj_, ad::matmul(x, param("assign.encoder.w"))), param("assign.encoder.b")));
    Tensor xg = ad::add(ad::matmul(e, param("assign.rnn.wx")), param("assign.rnn.b"));
    const Tensor& wh = param("assign.rnn.wh");

    AssignFeatures out;
    Tensor h, c;
    for (std::size_t tau = 0; tau < w; ++tau) {
        Tensor xt = ad::slice_rows(xg, tau * rows, (tau + 1) * rows);
        if (cfg_.recurrent == Recurrent::Lstm) {
            Tensor gates = tau == 0 ? xt : ad::add(xt, ad::matmul(h, wh));
            Tensor i = ad::sigmoid(ad::slice_last(gates, 0, d));
            Tensor f = ad::sigmoid(ad::slice_last(gates, d, 2 * d));
            Tensor g = ad::tanh(ad::slice_last(gates, 2 * d, 3 * d));
            Tensor o = ad::sigmoid(ad::slice_last(gates, 3 * d, 4 * d));
            c = tau == 0 ? ad::mul(i, g) : ad::add(ad::mul(f, c), ad::mul(i, g));
            h = ad::mul(o, ad::tanh(c));
        } else {
            Tensor r, z, n;
            if (tau == 0) {
                r = ad::sigmoid(ad::slice_last(xt, 0, d));
                z = ad::sigmoid(ad::slice_last(xt, d, 2 * d));
                n = ad::tanh(ad::slice_last(xt, 2 * d, 3 * d));
                h = ad::sub(n, ad::mul(z, n));
            } else {
                Tensor hh = ad::matmul(h, wh);
                r = ad::sigmoid(ad::add(ad::slice_last(xt, 0, d), ad::slice_last(hh, 0, d)));
                z = ad::sigmoid(ad::add(ad::slice_last(xt, d, 2 * d), ad::slice_last(hh, d, 2 * d)));
                n = ad::tanh(ad::add(ad::slice_last(xt, 2 * d, 3 * d), ad::mul(r, ad::slice_last(hh, 2 * d, 3 * d))));
                h = ad::add(n, ad::mul(z, ad::sub(h, n)));
            }
        }
        out.seq.push_back(h);
    }
    out.final = h;
    return out;
}

AssignFeatures Model::zero_assign_features(std::size_t rows) const {
    AssignFeatures out;
    out.final = Tensor::zeros({rows, cfg_.hidden});
    out.seq.assign(cfg_.assign_window, out.final);
    return out;
}

Tensor Model::fuse(const Tensor& h_flow, const AssignFeatures& a, Tensor* weights) const {
    if (a.final.rows() != h_flow.rows() || a.seq.size() != cfg_.assign_window) {
        throw ValidationError("fuse: flow features " + ad::to_string(h_flow.shape()) +
                              " and assignment features " + ad::to_string(a.final.shape()) + " disagree");
    }
    if (cfg_.fusion == Fusion::Concat) return ad::concat_last({h_flow, a.final});
    std::vector<Tensor> scores;
    for (const auto& key : a.seq) scores.push_back(ad::sum_last(ad::mul(h_flow, key)));
    Tensor alpha =
        ad::softmax_last(ad::scale(ad::concat_last(scores), 1.0 / std::sqrt(static_cast<double>(cfg_.hidden))));
    Tensor context;
    for (std::size_t tau = 0; tau < a.seq.size(); ++tau) {
        Tensor term = ad::mul(a.seq[tau], ad::slice_last(alpha, tau, tau + 1));
        context = context ? ad::add(context, term) : term;
    }
    if (weights) *weights = alpha;
    return ad::concat_last({h_flow, context});
}

StepOutput Model::decode(const Tensor& fused) const {
    Tensor h1 = ad::relu(ad::add(ad::matmul(fused, param("decoder.fc1.w")), param("decoder.fc1.b")));
    Tensor h2 = ad::relu(ad::add(ad::add(ad::matmul(h1, param("decoder.fc2.w")), param("decoder.fc2.b")),
                                 ad::matmul(fused, param("decoder.skip.w"))));
    StepOutput out;
    out.magnitude = ad::add(ad::matmul(h2, param("decoder.magnitude.w")), param("decoder.magnitude.b"));
    out.gate_logits = ad::add(ad::matmul(h2, param("decoder.gate.w")), param("decoder.gate.b"));
    out.prediction =
        ad::scale(ad::mul(ad::softplus(out.magnitude), ad::sigmoid(out.gate_logits)), cfg_.flow_scale);
    return out;
}

StepOutput Model::forward(const Batch& batch) const {
    const std::size_t rows = batch.size * cfg_.cells;
    Tensor hf = flow_branch(batch.flow, rows);
    AssignFeatures a = cfg_.use_assignment ? assignment_branch(batch.assign, rows) : zero_assign_features(rows);
    Tensor weights;
    StepOutput out = decode(fuse(hf, a, &weights));
    out.attention = weights;
    return out;
}

std::vector<double> Model::predict_step(const RealMatrix& assign_window, const RealMatrix& flow_window) const {
    ad::NoGradGuard guard;
    return forward(make_batch(assign_window, flow_window, cfg_)).prediction.value();
}

RealMatrix Model::rollout(const IntMatrix& assignment) const {
    const std::size_t s_count = cfg_.cells, t_count = assignment.cols();
    if (assignment.rows() != s_count) {
        throw ValidationError("rollout: assignment matrix has " + std::to_string(assignment.rows()) +
                              " rows, model expects " + std::to_string(s_count));
    }
    ad::NoGradGuard guard;
    RealMatrix out(s_count, t_count, 0.0);
    if (t_count <= 1) return out;

    // The assignment branch never sees predictions: evaluate it for every step
    // up front, batched, with one shared evaluation for all-zero windows.
    std::vector<AssignFeatures> features(t_count);
    if (cfg_.use_assignment) {
        std::vector<RealMatrix> windows(t_count);
        std::vector<std::size_t> busy;
        std::vector<std::size_t> idle;
        for (std::size_t t = 1; t < t_count; ++t) {
            windows[t] = time_window(assignment, t, cfg_.assign_window);
            bool any = false;
            for (double v : windows[t].data()) any |= v != 0.0;
            (any ? busy : idle).push_back(t);
        }
        auto split = [&](const AssignFeatures& batch, std::size_t k) {
            AssignFeatures f;
            f.final = ad::slice_rows(batch.final, k * s_count, (k + 1) * s_count);
            for (const auto& h : batch.seq) f.seq.push_back(ad::slice_rows(h, k * s_count, (k + 1) * s_count));
            return f;
        };
        constexpr std::size_t chunk = 64;
        for (std::size_t begin = 0; begin < busy.size(); begin += chunk) {
            const std::size_t end = std::min(busy.size(), begin + chunk);
            std::vector<const RealMatrix*> group;
            for (std::size_t k = begin; k < end; ++k) group.push_back(&windows[busy[k]]);
            AssignFeatures batch = assignment_branch(stack_windows(group, cfg_.assign_window, s_count),
                                                     group.size() * s_count);
            for (std::size_t k = begin; k < end; ++k) features[busy[k]] = split(batch, k - begin);
        }
        if (!idle.empty()) {
            RealMatrix zero(cfg_.assign_window, s_count, 0.0);
            AssignFeatures shared = assignment_branch(stack_windows({&zero}, cfg_.assign_window, s_count), s_count);
            for (std::size_t t : idle) features[t] = shared;
        }
    } else {
        const AssignFeatures zero = zero_assign_features(s_count);
        for (std::size_t t = 1; t < t_count; ++t) features[t] = zero;
    }

    for (std::size_t t = 1; t < t_count; ++t) {
        const RealMatrix qw = time_window(out, t, cfg_.flow_window);
        Tensor hf = flow_branch(stack_windows({&qw}, cfg_.flow_window, s_count), s_count);
        const std::vector<double> pred = decode(fuse(hf, features[t])).prediction.value();
        for (std::size_t s = 0; s < s_count; ++s) out(s, t) = pred[s];
    }
    return out;
}

Model Model::flow_only_variant() const {
    Model m = *this;
    m.cfg_.use_assignment = false;
    // Deep-copy parameter storage so the variant is independent.
    for (auto& [name, t] : m.params_) t = Tensor::parameter(t.shape(), t.value());
    return m;
}

std::vector<ad::NamedArray> Model::checkpoint_arrays() const {
    std::vector<ad::NamedArray> out;
    for (const auto& [name, t] : params_) out.push_back({name, t.shape(), t.value()});
    return out;
}

void Model::load_arrays(const std::vector<ad::NamedArray>& arrays, const std::string& source) {
    if (arrays.size() != params_.size()) {
        throw LoadError(source + ": expected " + std::to_string(params_.size()) + " arrays, found " +
                        std::to_string(arrays.size()));
    }
    for (const auto& a : arrays) {
        auto it = index_.find(a.name);
        if (it == index_.end()) throw LoadError(source + ": unexpected array " + a.name);
        Tensor& t = params_[it->second].second;
        if (t.shape() != a.shape) {
            throw LoadError(source + ": array " + a.name + " has shape " + ad::to_string(a.shape) + ", expected " +
                            ad::to_string(t.shape()));
        }
        t.value_mut() = a.values;
    }
}

void Model::save(const std::filesystem::path& dir) const {
    nlohmann::ordered_json j;
    j["cells"] = cfg_.cells;
    j["flow_window"] = cfg_.flow_window;
    j["assign_window"] = cfg_.assign_window;
    j["hidden"] = cfg_.hidden;
    j["residual_channels"] = cfg_.residual_channels;
    j["blocks"] = cfg_.blocks;
    j["fusion"] = to_string(cfg_.fusion);
    j["recurrent"] = to_string(cfg_.recurrent);
    j["gate_weight"] = cfg_.gate_weight;
    j["interval_s"] = cfg_.interval;
    j["flow_scale"] = cfg_.flow_scale;
    j["assign_scale"] = cfg_.assign_scale;
    j["use_assignment"] = cfg_.use_assignment;
    auto adj = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < adj_.rows(); ++i) {
        adj.push_back(std::vector<double>(adj_.row(i), adj_.row(i) + adj_.cols()));
    }
    j["adjacency"] = adj;
    csv::write_text(dir / "config.json", j.dump(2) + "\n");
    ad::save_checkpoint(checkpoint_arrays(), dir / "model.ckpt");
}

Model Model::load(const std::filesystem::path& dir) {
    const auto cpath = dir / "config.json";
    ModelConfig cfg;
    RealMatrix adj;
    try {
        const auto j = nlohmann::json::parse(csv::read_text(cpath));
        cfg.cells = j.at("cells").get<std::size_t>();
        cfg.flow_window = j.at("flow_window").get<std::size_t>();
        cfg.assign_window = j.at("assign_window").get<std::size_t>();
        cfg.hidden = j.at("hidden").get<std::size_t>();
        cfg.residual_channels = j.at("residual_channels").get<std::size_t>();
        cfg.blocks = j.at("blocks").get<std::size_t>();
        cfg.fusion = parse_fusion(j.at("fusion").get<std::string>());
        cfg.recurrent = parse_recurrent(j.at("recurrent").get<std::string>());
        cfg.gate_weight = j.at("gate_weight").get<double>();
        cfg.interval = j.at("interval_s").get<double>();
        cfg.flow_scale = j.at("flow_scale").get<double>();
        cfg.assign_scale = j.at("assign_scale").get<double>();
        cfg.use_assignment = j.at("use_assignment").get<bool>();
        const auto rows = j.at("adjacency").get<std::vector<std::vector<double>>>();
        adj = RealMatrix(rows.size(), rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.size()) throw LoadError(cpath.string() + ": adjacency is not square");
            std::copy(rows[i].begin(), rows[i].end(), adj.row(i));
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(cpath.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw LoadError(cpath.string() + ": " + e.what());
    }
    Model m(cfg, std::move(adj), 0);
    const auto ckpt = dir / "model.ckpt";
    m.load_arrays(ad::load_checkpoint(ckpt), ckpt.string());
    return m;
}

double aggregate_tt(const RealMatrix& q, double interval) {
    double total = 0;
    for (double v : q.data()) {
        if (v < 0) throw ValidationError("aggregate_tt: negative flow entry");
        total += v;
    }
    return total * interval;
}

double aggregate_tt(const IntMatrix& q, double interval) {
    std::int64_t total = 0;
    for (auto v : q.data()) {
        if (v < 0) throw ValidationError("aggregate_tt: negative flow entry");
        total += v;
    }
    return static_cast<double>(total) * interval;
}

}  // namespace surrogate
