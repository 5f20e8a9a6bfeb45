#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "assign_surrogate/dataset.hpp"
#include "assign_surrogate/model.hpp"

namespace surrogate {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
    double gate_weight = 0.1;
    double clip_norm = 5.0;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_mae = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_mae = 0.0;
    std::size_t gradient_samples = 0;  // samples that contributed to a gradient step
};

struct TrainResult {
    Model model;
    TrainReport report;
};

/// Copies cells, interval and windows from the dataset and sets the input
/// scales to the mean positive Q and A entries of the training runs.
ModelConfig fit_model_config(ModelConfig cfg, const Dataset& ds);

/// Mini-batch Adam on teacher-forced one-step samples of the train split;
/// loss = MAE + gate_weight * BCE(gate logits, 1[Q > 0]). Keeps the parameters
/// of the epoch with the lowest validation MAE; stops after `patience` epochs
/// without improvement. Throws RuntimeFailure on a non-finite loss.
TrainResult train(const Dataset& ds, const RealMatrix& adjacency, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});

struct Metrics {
    double mae = 0.0;
    double rmse = 0.0;
};

/// Teacher-forced one-step metrics over every (sample, cell) of the listed runs.
Metrics evaluate_split(const Model& model, const Dataset& ds, const std::vector<std::size_t>& runs);
/// Same metrics for the persistence forecast Q_hat[t] = Q[t-1].
Metrics persistence_split(const Dataset& ds, const std::vector<std::size_t>& runs);

/// S x T one-step predictions for one run: column t comes from the true
/// windows before t, column 0 is zero.
RealMatrix one_step_predictions(const Model& model, const Run& run);

/// Metrics from flat prediction / target arrays.
Metrics metrics(const std::vector<double>& pred, const std::vector<double>& target);

/// report.csv: epoch,train_loss,val_mae,seconds
void save_train_report(const TrainReport& report, const std::filesystem::path& file);

}  // namespace surrogate
