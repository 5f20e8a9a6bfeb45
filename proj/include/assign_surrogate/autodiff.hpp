#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "assign_surrogate/matrix.hpp"

namespace surrogate::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until backward touches the node
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;
    bool requires_grad = false;
    bool consumed = false;  // backward already ran through this node
    const char* op = "leaf";

    std::vector<double>& grad_buffer();
};

/// Handle to a node of the dynamic computation graph. Every array is viewed as
/// rows() x cols() with cols() the last axis and rows() the product of the rest.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor parameter(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    static Tensor scalar(double v);
    static Tensor from_matrix(const RealMatrix& m);

    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t cols() const;
    std::size_t rows() const;
    const std::vector<double>& value() const { return node_->value; }
    /// Mutable values; intended for optimizer updates and tests on leaves.
    std::vector<double>& value_mut() { return node_->value; }
    const std::vector<double>& grad() const;
    bool requires_grad() const { return node_->requires_grad; }
    double item() const;
    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    /// Reverse pass from a scalar. Leaf gradients accumulate (+=); the graph
    /// behind this tensor is released afterwards, so a second call throws.
    void backward() const;
    void zero_grad();

    const std::shared_ptr<Node>& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

/// While alive, ops record no graph (forward-only evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};
bool grad_enabled();

// Binary elementwise ops. `b` may match `a`'s shape, be a scalar, a row of
// a.cols() entries (broadcast over rows) or a column of a.rows() x 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
inline Tensor add_bias(const Tensor& x, const Tensor& bias) { return add(x, bias); }
Tensor scale(const Tensor& a, double factor);

/// (... x k) times (k x n) -> (... x n).
Tensor matmul(const Tensor& x, const Tensor& w);
/// Treats x (B*S x C) as B stacked S x C blocks and left-multiplies each by
/// the constant S x S matrix `adj`.
Tensor block_left_matmul(const RealMatrix& adj, const Tensor& x);

Tensor concat_last(const std::vector<Tensor>& parts);
Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
/// Rows [begin, end) of the rows() x cols() view.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
/// (parts*R) x C stacked blocks -> R x (parts*C), block p landing in columns
/// [p*C, (p+1)*C).
Tensor fold_rows(const Tensor& x, std::size_t parts);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor softmax_last(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// rows() x 1 sums over the last axis.
Tensor sum_last(const Tensor& x);

/// Mean absolute error over all entries (subgradient 0 at equality).
Tensor mae(const Tensor& pred, const Tensor& target);
/// Mean binary cross-entropy of logits against 0/1 targets, numerically stable.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// Optimisation.

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);
    /// One bias-corrected update from the parameters' current gradients.
    void step();
    void zero_grad();
    std::size_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

/// Global L2 norm of all gradients; rescales them to `max_norm` when larger.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

// Checkpoints.

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<double> values;
    bool operator==(const NamedArray&) const = default;
};

/// Per array: a header line `name;ndims;d0,d1,...` followed by one line of
/// row-major values in shortest round-trip decimal form.
void save_checkpoint(const std::vector<NamedArray>& arrays, const std::filesystem::path& file);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& file);

}  // namespace surrogate::ad
