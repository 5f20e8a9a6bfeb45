#include "assign_surrogate/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "assign_surrogate/csv.hpp"
#include "assign_surrogate/error.hpp"

namespace surrogate::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

thread_local bool g_grad_enabled = true;

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw ValidationError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

/// Creates the result node; records parents only when some input needs grad.
std::shared_ptr<Node> make_result(const char* op, Shape shape, std::vector<double> value,
                                  std::initializer_list<const Tensor*> inputs) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (!g_grad_enabled) return n;
    for (const Tensor* t : inputs) n->requires_grad |= t->requires_grad();
    if (n->requires_grad) {
        for (const Tensor* t : inputs) n->parents.push_back(t->node());
    }
    return n;
}

enum class Broadcast { Same, Scalar, Row, Column };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return Broadcast::Same;
    if (b.size() == 1) return Broadcast::Scalar;
    if (b.size() == a.cols() && (b.shape().size() == 1 || b.rows() == 1)) return Broadcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Column;
    shape_error(op, a.shape(), b.shape());
}

inline std::size_t b_index(Broadcast k, std::size_t i, std::size_t cols) {
    switch (k) {
        case Broadcast::Same: return i;
        case Broadcast::Scalar: return 0;
        case Broadcast::Row: return i % cols;
        case Broadcast::Column: return i / cols;
    }
    return i;
}

template <typename F, typename G>
Tensor unary(const char* op, const Tensor& x, F forward, G derivative) {
    std::vector<double> out(x.size());
    const auto& xv = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(xv[i]);
    auto n = make_result(op, x.shape(), std::move(out), {&x});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* px = x.node().get();
        n->backward_fn = [self, px, derivative] {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * derivative(px->value[i], self->value[i]);
        };
    }
    return Tensor(n);
}

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}

std::vector<double>& Node::grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    if (numel(shape) != values.size()) {
        throw ValidationError("tensor: shape " + to_string(shape) + " does not hold " + std::to_string(values.size()) +
                              " values");
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(n);
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
}

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

Tensor Tensor::from_matrix(const RealMatrix& m) { return constant({m.rows(), m.cols()}, m.data()); }

std::size_t Tensor::cols() const { return last_dim(shape()); }
std::size_t Tensor::rows() const { return cols() == 0 ? 0 : size() / cols(); }

const std::vector<double>& Tensor::grad() const { return node_->grad_buffer(); }

double Tensor::item() const {
    if (size() != 1) throw ValidationError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
    return node_->value[0];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

void Tensor::backward() const {
    if (size() != 1) throw ValidationError("backward: loss must be a scalar, got shape " + to_string(shape()));
    if (node_->consumed) throw ValidationError("backward: graph already differentiated (double backward)");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (n->consumed) throw ValidationError("backward: graph already differentiated (double backward)");
        if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
    }
    node_->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
    for (Node* n : order) {
        if (!n->backward_fn) continue;
        n->consumed = true;
        n->backward_fn = nullptr;
        n->parents.clear();
        std::vector<double>().swap(n->grad);
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace {

template <typename F, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
    const Broadcast kind = broadcast_kind(op, a, b);
    const std::size_t cols = a.cols();
    const auto& av = a.value();
    const auto& bv = b.value();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[b_index(kind, i, cols)]);
    auto n = make_result(op, a.shape(), std::move(out), {&a, &b});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* pa = a.node().get();
        Node* pb = b.node().get();
        n->backward_fn = [self, pa, pb, kind, cols, da, db] {
            const auto& g = self->grad;
            if (pa->requires_grad) {
                auto& ga = pa->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * da(pa->value[i], pb->value[b_index(kind, i, cols)]);
                }
            }
            if (pb->requires_grad) {
                auto& gb = pb->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const std::size_t j = b_index(kind, i, cols);
                    gb[j] += g[i] * db(pa->value[i], pb->value[j]);
                }
            }
        };
    }
    return Tensor(n);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(
        "scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
    if (w.shape().size() != 2 || x.cols() != w.shape()[0]) shape_error("matmul", x.shape(), w.shape());
    const std::size_t m = x.rows(), k = x.cols(), nn = w.cols();
    std::vector<double> out(m * nn);
    Map(out.data(), m, nn).noalias() = MapC(x.value().data(), m, k) * MapC(w.value().data(), k, nn);
    Shape shape = x.shape();
    shape.back() = nn;
    auto n = make_result("matmul", std::move(shape), std::move(out), {&x, &w});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* px = x.node().get();
        Node* pw = w.node().get();
        n->backward_fn = [self, px, pw, m, k, nn] {
            MapC g(self->grad.data(), m, nn);
            if (px->requires_grad) {
                Map(px->grad_buffer().data(), m, k).noalias() += g * MapC(pw->value.data(), k, nn).transpose();
            }
            if (pw->requires_grad) {
                Map(pw->grad_buffer().data(), k, nn).noalias() += MapC(px->value.data(), m, k).transpose() * g;
            }
        };
    }
    return Tensor(n);
}

Tensor block_left_matmul(const RealMatrix& adj, const Tensor& x) {
    const std::size_t s = adj.rows();
    if (adj.cols() != s || s == 0 || x.rows() % s != 0) {
        shape_error("block_left_matmul", {adj.rows(), adj.cols()}, x.shape());
    }
    const std::size_t c = x.cols(), blocks = x.rows() / s;
    std::vector<double> out(x.size());
    MapC a(adj.data().data(), s, s);
    for (std::size_t b = 0; b < blocks; ++b) {
        Map(out.data() + b * s * c, s, c).noalias() = a * MapC(x.value().data() + b * s * c, s, c);
    }
    auto n = make_result("block_left_matmul", x.shape(), std::move(out), {&x});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* px = x.node().get();
        RealMatrix adj_copy = adj;
        n->backward_fn = [self, px, adj_copy, s, c, blocks] {
            MapC a(adj_copy.data().data(), s, s);
            auto& gx = px->grad_buffer();
            for (std::size_t b = 0; b < blocks; ++b) {
                Map(gx.data() + b * s * c, s, c).noalias() += a.transpose() * MapC(self->grad.data() + b * s * c, s, c);
            }
        };
    }
    return Tensor(n);
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ValidationError("concat_last: no inputs");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) shape_error("concat_last", parts[0].shape(), p.shape());
        cols += p.cols();
    }
    std::vector<double> out(rows * cols);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t pc = p.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(p.value().data() + r * pc, pc, out.data() + r * cols + offset);
        }
        offset += pc;
    }
    Shape shape = parts[0].shape();
    shape.back() = cols;
    auto n = std::make_shared<Node>();
    n->op = "concat_last";
    n->shape = std::move(shape);
    n->value = std::move(out);
    if (g_grad_enabled) {
        for (const auto& p : parts) n->requires_grad |= p.requires_grad();
    }
    if (n->requires_grad) {
        for (const auto& p : parts) n->parents.push_back(p.node());
        Node* self = n.get();
        n->backward_fn = [self, rows, cols] {
            std::size_t off = 0;
            for (const auto& p : self->parents) {
                const std::size_t pc = p->shape.empty() ? 1 : p->shape.back();
                if (p->requires_grad) {
                    auto& g = p->grad_buffer();
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < pc; ++j) g[r * pc + j] += self->grad[r * cols + off + j];
                    }
                }
                off += pc;
            }
        };
    }
    return Tensor(n);
}

Tensor slice_last(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t cols = x.cols(), rows = x.rows();
    if (begin >= end || end > cols) {
        throw ValidationError("slice_last: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                              ") outside shape " + to_string(x.shape()));
    }
    const std::size_t w = end - begin;
    std::vector<double> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.value().data() + r * cols + begin, w, out.data() + r * w);
    Shape shape = x.shape();
    shape.back() = w;
    auto n = make_result("slice_last", std::move(shape), std::move(out), {&x});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* px = x.node().get();
        n->backward_fn = [self, px, rows, cols, begin, w] {
            auto& g = px->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < w; ++j) g[r * cols + begin + j] += self->grad[r * w + j];
            }
        };
    }
    return Tensor(n);
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) shape_error("reshape", x.shape(), shape);
    Tensor t = unary(
        "reshape", x, [](double v) { return v; }, [](double, double) { return 1.0; });
    t.node()->shape = std::move(shape);
    return t;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    const std::size_t cols = x.cols();
    if (begin >= end || end > x.rows()) {
        throw ValidationError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                              ") outside shape " + to_string(x.shape()));
    }
    std::vector<double> out(x.value().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                            x.value().begin() + static_cast<std::ptrdiff_t>(end * cols));
    auto n = make_result("slice_rows", {end - begin, cols}, std::move(out), {&x});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* px = x.node().get();
        const std::size_t offset = begin * cols;
        n->backward_fn = [self, px, offset] {
            auto& g = px->grad_buffer();
            for (std::size_t i = 0; i < self->grad.size(); ++i) g[offset + i] += self->grad[i];
        };
    }
    return Tensor(n);
}

Tensor fold_rows(const Tensor& x, std::size_t parts) {
    if (parts == 0 || x.rows() % parts != 0) shape_error("fold_rows", x.shape(), {parts});
    const std::size_t rows = x.rows() / parts, cols = x.cols(), width = parts * cols;
    std::vector<double> out(x.size());
    for (std::size_t p = 0; p < parts; ++p) {
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(x.value().data() + (p * rows + r) * cols, cols, out.data() + r * width + p * cols);
        }
    }
    auto n = make_result("fold_rows", {rows, width}, std::move(out), {&x});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* px = x.node().get();
        n->backward_fn = [self, px, parts, rows, cols, width] {
            auto& g = px->grad_buffer();
            for (std::size_t p = 0; p < parts; ++p) {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                        g[(p * rows + r) * cols + c] += self->grad[r * width + p * cols + c];
                    }
                }
            }
        };
    }
    return Tensor(n);
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        "sigmoid", x,
        [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary(
        "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
    return unary(
        "relu", x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
    return unary(
        "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v, double) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

Tensor softmax_last(const Tensor& x) {
    const std::size_t cols = x.cols(), rows = x.rows();
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.value().data() + r * cols;
        double* o = out.data() + r * cols;
        const double mx = *std::max_element(in, in + cols);
        double total = 0;
        for (std::size_t j = 0; j < cols; ++j) total += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < cols; ++j) o[j] /= total;
    }
    auto n = make_result("softmax_last", x.shape(), std::move(out), {&x});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* px = x.node().get();
        n->backward_fn = [self, px, rows, cols] {
            auto& g = px->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = self->value.data() + r * cols;
                const double* gy = self->grad.data() + r * cols;
                double dot = 0;
                for (std::size_t j = 0; j < cols; ++j) dot += y[j] * gy[j];
                for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += y[j] * (gy[j] - dot);
            }
        };
    }
    return Tensor(n);
}

Tensor sum(const Tensor& x) {
    double total = 0;
    for (double v : x.value()) total += v;
    auto n = make_result("sum", {1}, {total}, {&x});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* px = x.node().get();
        n->backward_fn = [self, px] {
            for (auto& g : px->grad_buffer()) g += self->grad[0];
        };
    }
    return Tensor(n);
}

Tensor mean(const Tensor& x) {
    if (x.size() == 0) throw ValidationError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_last(const Tensor& x) {
    const std::size_t cols = x.cols(), rows = x.rows();
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) out[r] += x.value()[r * cols + j];
    }
    Shape shape = x.shape();
    if (shape.empty()) shape = {1};
    shape.back() = 1;
    auto n = make_result("sum_last", std::move(shape), std::move(out), {&x});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* px = x.node().get();
        n->backward_fn = [self, px, rows, cols] {
            auto& g = px->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += self->grad[r];
            }
        };
    }
    return Tensor(n);
}

Tensor mae(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) shape_error("mae", pred.shape(), target.shape());
    if (pred.size() == 0) throw ValidationError("mae: empty tensors");
    const double inv = 1.0 / static_cast<double>(pred.size());
    double total = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred.value()[i] - target.value()[i]);
    auto n = make_result("mae", {1}, {total * inv}, {&pred, &target});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* pp = pred.node().get();
        Node* pt = target.node().get();
        n->backward_fn = [self, pp, pt, inv] {
            const double g = self->grad[0] * inv;
            for (std::size_t i = 0; i < pp->value.size(); ++i) {
                const double d = pp->value[i] - pt->value[i];
                const double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                if (pp->requires_grad) pp->grad_buffer()[i] += g * sgn;
                if (pt->requires_grad) pt->grad_buffer()[i] -= g * sgn;
            }
        };
    }
    return Tensor(n);
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    if (logits.shape() != targets.shape()) shape_error("bce_with_logits", logits.shape(), targets.shape());
    if (logits.size() == 0) throw ValidationError("bce_with_logits: empty tensors");
    const double inv = 1.0 / static_cast<double>(logits.size());
    double total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits.value()[i], y = targets.value()[i];
        total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    auto n = make_result("bce_with_logits", {1}, {total * inv}, {&logits, &targets});
    if (n->requires_grad) {
        Node* self = n.get();
        Node* pz = logits.node().get();
        Node* py = targets.node().get();
        n->backward_fn = [self, pz, py, inv] {
            const double g = self->grad[0] * inv;
            for (std::size_t i = 0; i < pz->value.size(); ++i) {
                const double z = pz->value[i], y = py->value[i];
                const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                if (pz->requires_grad) pz->grad_buffer()[i] += g * (sig - y);
                if (py->requires_grad) py->grad_buffer()[i] -= g * z;
            }
        };
    }
    return Tensor(n);
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& value = params_[k].value_mut();
        const auto& grad = params_[k].grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < value.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
            value[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
    double sq = 0;
    for (const auto& p : params) {
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const double f = max_norm / norm;
        for (const auto& p : params) {
            for (double& g : p.node()->grad_buffer()) g *= f;
        }
    }
    return norm;
}

void save_checkpoint(const std::vector<NamedArray>& arrays, const std::filesystem::path& file) {
    std::string out;
    for (const auto& a : arrays) {
        if (a.name.find_first_of(";\n") != std::string::npos) {
            throw ValidationError("checkpoint: invalid array name '" + a.name + "'");
        }
        if (numel(a.shape) != a.values.size()) throw ValidationError("checkpoint: shape mismatch for " + a.name);
        out += a.name + ";" + std::to_string(a.shape.size()) + ";";
        for (std::size_t i = 0; i < a.shape.size(); ++i) out += (i ? "," : "") + std::to_string(a.shape[i]);
        out += "\n";
        for (std::size_t i = 0; i < a.values.size(); ++i) out += (i ? "," : "") + csv::format(a.values[i]);
        out += "\n";
    }
    csv::write_text(file, out);
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& file) {
    std::istringstream in(csv::read_text(file));
    const std::string src = file.string();
    std::vector<NamedArray> arrays;
    std::string header, values;
    while (std::getline(in, header)) {
        if (header.empty()) continue;
        const auto parts = csv::split(header, ';');
        if (parts.size() != 3) throw LoadError(src + ": malformed header '" + header + "'");
        NamedArray a;
        a.name = parts[0];
        const auto ndims = static_cast<std::size_t>(csv::to_int(parts[1], src));
        if (ndims > 0) {
            for (const auto& d : csv::split(parts[2], ',')) a.shape.push_back(static_cast<std::size_t>(csv::to_int(d, src)));
        }
        if (a.shape.size() != ndims) throw LoadError(src + ": dimension count mismatch for " + a.name);
        if (!std::getline(in, values)) throw LoadError(src + ": missing values for " + a.name);
        const std::size_t n = numel(a.shape);
        if (n > 0) {
            for (const auto& v : csv::split(values, ',')) a.values.push_back(csv::to_double(v, src));
        }
        if (a.values.size() != n) throw LoadError(src + ": expected " + std::to_string(n) + " values for " + a.name);
        arrays.push_back(std::move(a));
    }
    return arrays;
}

}  // namespace surrogate::ad
