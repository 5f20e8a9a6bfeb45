#include "assign_surrogate/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"
#include "assign_surrogate/rng.hpp"

namespace surrogate {

void validate(const TrainConfig& cfg) {
    if (cfg.batch_size < 1) throw ValidationError("train: batch size must be >= 1");
    if (cfg.patience < 1) throw ValidationError("train: patience must be >= 1");
    if (cfg.max_epochs < 1) throw ValidationError("train: max epochs must be >= 1");
    if (!(cfg.lr >= 0)) throw ValidationError("train: learning rate must be nonnegative");
    if (!(cfg.gate_weight >= 0)) throw ValidationError("train: gate weight must be nonnegative");
    if (!(cfg.clip_norm > 0)) throw ValidationError("train: clip norm must be positive");
}

ModelConfig fit_model_config(ModelConfig cfg, const Dataset& ds) {
    cfg.cells = ds.spec.cells;
    cfg.interval = ds.spec.interval;
    cfg.flow_window = ds.spec.flow_window;
    cfg.assign_window = ds.spec.assign_window;
    auto positive_mean = [&](auto member) {
        double total = 0;
        std::size_t count = 0;
        for (std::size_t i : ds.split.train) {
            for (auto v : (ds.runs[i].*member).data()) {
                if (v > 0) {
                    total += static_cast<double>(v);
                    ++count;
                }
            }
        }
        return count ? total / static_cast<double>(count) : 1.0;
    };
    cfg.flow_scale = positive_mean(&Run::flows);
    cfg.assign_scale = positive_mean(&Run::assignment);
    return cfg;
}

namespace {

std::vector<const Sample*> slice(const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                                 std::size_t begin, std::size_t end) {
    std::vector<const Sample*> out;
    for (std::size_t k = begin; k < end; ++k) out.push_back(&samples[order[k]]);
    return out;
}

ad::Tensor targets_of(const std::vector<const Sample*>& batch) {
    std::vector<double> v;
    for (const Sample* s : batch) v.insert(v.end(), s->target.begin(), s->target.end());
    const ad::Shape shape{v.size(), 1};
    return ad::Tensor::constant(shape, std::move(v));
}

ad::Tensor occupancy_of(const ad::Tensor& targets) {
    std::vector<double> v(targets.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = targets.value()[i] > 0 ? 1.0 : 0.0;
    return ad::Tensor::constant(targets.shape(), std::move(v));
}

void predictions(const Model& model, const std::vector<Sample>& samples, std::vector<double>& pred,
                 std::vector<double>& target) {
    ad::NoGradGuard guard;
    constexpr std::size_t chunk = 256;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t begin = 0; begin < samples.size(); begin += chunk) {
        auto batch = slice(samples, order, begin, std::min(samples.size(), begin + chunk));
        const auto out = model.forward(make_batch(batch, model.config())).prediction;
        pred.insert(pred.end(), out.value().begin(), out.value().end());
        for (const Sample* s : batch) target.insert(target.end(), s->target.begin(), s->target.end());
    }
}

std::string parameter_norms(const Model& model) {
    std::ostringstream msg;
    for (const auto& [name, t] : model.named_parameters()) {
        double sq = 0;
        for (double v : t.value()) sq += v * v;
        msg << ' ' << name << '=' << std::sqrt(sq);
    }
    return msg.str();
}

}  // namespace

Metrics metrics(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw ValidationError("metrics: prediction and target sizes differ");
    if (pred.empty()) throw ValidationError("metrics: empty evaluation set");
    double abs_sum = 0, sq_sum = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
    }
    const auto n = static_cast<double>(pred.size());
    return {abs_sum / n, std::sqrt(sq_sum / n)};
}

Metrics evaluate_split(const Model& model, const Dataset& ds, const std::vector<std::size_t>& runs) {
    const auto samples = build_samples(ds.runs, runs, ds.spec);
    if (samples.empty()) throw ValidationError("evaluate: split has no samples");
    std::vector<double> pred, target;
    predictions(model, samples, pred, target);
    return metrics(pred, target);
}

Metrics persistence_split(const Dataset& ds, const std::vector<std::size_t>& runs) {
    std::vector<double> pred, target;
    for (std::size_t i : runs) {
        const auto& q = ds.runs.at(i).flows;
        for (std::size_t t = 1; t < q.cols(); ++t) {
            for (std::size_t s = 0; s < q.rows(); ++s) {
                pred.push_back(static_cast<double>(q(s, t - 1)));
                target.push_back(static_cast<double>(q(s, t)));
            }
        }
    }
    if (pred.empty()) throw ValidationError("evaluate: split has no samples");
    return metrics(pred, target);
}

RealMatrix one_step_predictions(const Model& model, const Run& run) {
    const auto& mc = model.config();
    if (run.flows.rows() != mc.cells || run.assignment.rows() != mc.cells ||
        run.assignment.cols() != run.flows.cols()) {
        throw ValidationError("one-step predictions: run " + std::to_string(run.sim_id) +
                              " does not match the model's " + std::to_string(mc.cells) + " cells");
    }
    const DatasetSpec spec{mc.cells, mc.interval, mc.flow_window, mc.assign_window};
    const std::vector<Run> one{run};
    const auto samples = build_samples(one, spec);
    std::vector<double> pred, target;
    predictions(model, samples, pred, target);
    RealMatrix out(mc.cells, run.flows.cols(), 0.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t s = 0; s < mc.cells; ++s) out(s, samples[i].t) = pred[i * mc.cells + s];
    }
    return out;
}

TrainResult train(const Dataset& ds, const RealMatrix& adjacency, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
    validate(cfg);
    ModelConfig mc = model_cfg;
    mc.gate_weight = cfg.gate_weight;
    if (mc.cells != ds.spec.cells || mc.flow_window != ds.spec.flow_window ||
        mc.assign_window != ds.spec.assign_window) {
        throw ValidationError("train: model config does not match the dataset spec (cells/windows)");
    }
    const auto train_samples = build_samples(ds.runs, ds.split.train, ds.spec);
    const auto val_samples = build_samples(ds.runs, ds.split.val, ds.spec);
    if (train_samples.empty()) throw ValidationError("train: training split has no samples");
    if (val_samples.empty()) throw ValidationError("train: validation split has no samples");

    TrainResult result{Model(mc, adjacency, derive_seed(cfg.seed, fnv1a("init"))), {}};
    Model& model = result.model;
    const auto params = model.parameters();
    ad::Adam opt(params, {cfg.lr});
    std::vector<ad::NamedArray> best = model.checkpoint_arrays();
    double best_mae = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train_samples.size());
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), 0);
        Rng(derive_seed(cfg.seed, epoch)).shuffle(order);
        double loss_sum = 0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
            const auto batch = slice(train_samples, order, begin, std::min(order.size(), begin + cfg.batch_size));
            opt.zero_grad();
            const auto out = model.forward(make_batch(batch, mc));
            const auto target = targets_of(batch);
            ad::Tensor loss = ad::mae(out.prediction, target);
            if (cfg.gate_weight > 0) {
                loss = ad::add(loss, ad::scale(ad::bce_with_logits(out.gate_logits, occupancy_of(target)),
                                               cfg.gate_weight));
            }
            const double value = loss.item();
            if (!std::isfinite(value)) {
                std::ostringstream msg;
                msg << "train: non-finite loss at epoch " << epoch << ", batch " << batch_index
                    << "; parameter norms:" << parameter_norms(model);
                throw RuntimeFailure(msg.str());
            }
            loss.backward();
            ad::clip_grad_norm(params, cfg.clip_norm);
            opt.step();
            loss_sum += value * static_cast<double>(batch.size());
            result.report.gradient_samples += batch.size();
        }

        std::vector<double> pred, target;
        predictions(model, val_samples, pred, target);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.val_mae = metrics(pred, target).mae;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.report.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_mae < best_mae) {
            best_mae = rec.val_mae;
            best = model.checkpoint_arrays();
            result.report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    model.load_arrays(best, "best checkpoint");
    result.report.best_val_mae = best_mae;
    return result;
}

void save_train_report(const TrainReport& report, const std::filesystem::path& file) {
    std::ostringstream out;
    out << "epoch,train_loss,val_mae,seconds\n";
    for (const auto& e : report.epochs) {
        out << e.epoch << ',' << csv::format(e.train_loss) << ',' << csv::format(e.val_mae) << ','
            << csv::format(e.seconds) << '\n';
    }
    csv::write_text(file, out.str());
}

}  // namespace surrogate
