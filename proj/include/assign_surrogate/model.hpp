#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "assign_surrogate/autodiff.hpp"
#include "assign_surrogate/dataset.hpp"
#include "assign_surrogate/matrix.hpp"
#include "assign_surrogate/rng.hpp"

namespace surrogate {

enum class Fusion { Concat, Attention };
enum class Recurrent { Lstm, Gru };

Fusion parse_fusion(const std::string& s);
Recurrent parse_recurrent(const std::string& s);
std::string to_string(Fusion f);
std::string to_string(Recurrent r);

struct ModelConfig {
    std::size_t cells = 0;
    std::size_t flow_window = 12;
    std::size_t assign_window = 12;
    std::size_t hidden = 64;
    std::size_t residual_channels = 32;
    std::size_t blocks = 2;  // block l uses temporal dilation 2^l
    Fusion fusion = Fusion::Attention;
    Recurrent recurrent = Recurrent::Lstm;
    double gate_weight = 0.1;
    double interval = 10.0;
    double flow_scale = 1.0;    // divides Q inputs, multiplies outputs
    double assign_scale = 1.0;  // divides A inputs
    bool use_assignment = true;
    bool operator==(const ModelConfig&) const = default;
};

/// Time positions consumed by the dilated convolution stack (1 + sum of dilations).
std::size_t receptive_field(const ModelConfig& cfg);
void validate(const ModelConfig& cfg);

/// Windows of B samples stacked time-major: row (tau * B + b) * S + s.
struct Batch {
    std::size_t size = 0;
    ad::Tensor flow;    // (W_Q * B * S) x 1
    ad::Tensor assign;  // (W_A * B * S) x 1
};

Batch make_batch(const std::vector<const Sample*>& samples, const ModelConfig& cfg);
/// Single pair of W x S windows.
Batch make_batch(const RealMatrix& assign_window, const RealMatrix& flow_window, const ModelConfig& cfg);

struct AssignFeatures {
    ad::Tensor final;             // R x d
    std::vector<ad::Tensor> seq;  // W_A entries of R x d
};

struct StepOutput {
    ad::Tensor prediction;    // R x 1, nonnegative
    ad::Tensor gate_logits;   // R x 1
    ad::Tensor magnitude;     // R x 1, pre-softplus
    ad::Tensor attention;     // R x W_A weights (attention fusion only)
};

class Model {
public:
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    Model(ModelConfig cfg, RealMatrix adjacency, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const RealMatrix& adjacency() const { return adj_; }

    std::vector<ad::Tensor> parameters() const;
    const std::vector<std::pair<std::string, ad::Tensor>>& named_parameters() const { return params_; }
    ad::Tensor& param(const std::string& name);
    const ad::Tensor& param(const std::string& name) const;

    ad::Tensor flow_branch(const ad::Tensor& flow, std::size_t rows) const;
    AssignFeatures assignment_branch(const ad::Tensor& assign, std::size_t rows) const;
    /// Attention weights are written to `weights` when non-null (attention mode).
    ad::Tensor fuse(const ad::Tensor& h_flow, const AssignFeatures& a, ad::Tensor* weights = nullptr) const;
    StepOutput decode(const ad::Tensor& fused) const;

    StepOutput forward(const Batch& batch) const;
    /// One-step prediction for one pair of W x S windows; returns S values.
    std::vector<double> predict_step(const RealMatrix& assign_window, const RealMatrix& flow_window) const;

    /// Free-running S x T prediction from an S x T assignment matrix. Windows
    /// start at zero, column 0 is zero, later columns feed back predictions.
    RealMatrix rollout(const IntMatrix& assignment) const;

    /// Same parameters with the assignment branch replaced by zeros.
    Model flow_only_variant() const;

    /// config.json (config + adjacency) and model.ckpt.
    void save(const std::filesystem::path& dir) const;
    static Model load(const std::filesystem::path& dir);

    std::vector<ad::NamedArray> checkpoint_arrays() const;
    /// Copies values in; throws LoadError on any missing, extra or misshapen array.
    void load_arrays(const std::vector<ad::NamedArray>& arrays, const std::string& source);

private:
    void add_param(const std::string& name, ad::Shape shape, bool bias, Rng& rng);
    AssignFeatures zero_assign_features(std::size_t rows) const;

    ModelConfig cfg_;
    RealMatrix adj_;
    std::vector<std::pair<std::string, ad::Tensor>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// g: sum over columns of interval * column total. Throws ValidationError on
/// a negative entry.
double aggregate_tt(const RealMatrix& q, double interval);
double aggregate_tt(const IntMatrix& q, double interval);

}  // namespace surrogate
