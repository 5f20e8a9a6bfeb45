// Finite-difference checks of every autodiff op, shared by unit and acceptance tests.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "assign_surrogate/autodiff.hpp"
#include "gradcheck.hpp"

namespace op_checks {

using namespace surrogate;
using namespace surrogate::ad;

/// Weighted sum so that every output entry gets a distinct upstream gradient.
inline Tensor project(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

inline double check_unary(Tensor (*op)(const Tensor&), std::uint64_t seed) {
    Rng rng(seed);
    auto x = gradcheck::random_param({3, 5}, rng, -2, 2);
    auto w = gradcheck::random_const({3, 5}, rng);
    return gradcheck::max_error({x}, [&] { return project(op(x), w); });
}

/// (op name, max relative error) for every op and broadcast mode.
inline std::vector<std::pair<std::string, double>> run_all(std::uint64_t seed) {
    using gradcheck::max_error;
    using gradcheck::random_const;
    using gradcheck::random_param;
    std::vector<std::pair<std::string, double>> out;
    out.emplace_back("sigmoid", check_unary(sigmoid, seed));
    out.emplace_back("tanh", check_unary(ad::tanh, seed));
    out.emplace_back("relu", check_unary(relu, seed));
    out.emplace_back("softplus", check_unary(softplus, seed));
    out.emplace_back("softmax_last", check_unary(softmax_last, seed));

    Rng rng(100 + seed);
    auto a = random_param({3, 4}, rng);
    auto b = random_param({3, 4}, rng);
    auto row = random_param({4}, rng);
    auto col = random_param({3, 1}, rng);
    auto s = random_param({1}, rng);
    auto w = random_const({3, 4}, rng);
    const std::pair<const char*, Tensor (*)(const Tensor&, const Tensor&)> binary[] = {
        {"add", &add}, {"sub", &sub}, {"mul", &mul}};
    for (const auto& [name, op] : binary) {
        const std::string n = name;
        out.emplace_back(n + " same", max_error({a, b}, [&] { return project(op(a, b), w); }));
        out.emplace_back(n + " row", max_error({a, row}, [&] { return project(op(a, row), w); }));
        out.emplace_back(n + " column", max_error({a, col}, [&] { return project(op(a, col), w); }));
        out.emplace_back(n + " scalar", max_error({a, s}, [&] { return project(op(a, s), w); }));
    }
    out.emplace_back("scale", max_error({a}, [&] { return project(scale(a, -1.7), w); }));

    auto m = random_param({4, 2}, rng);
    auto w2 = random_const({3, 2}, rng);
    out.emplace_back("matmul", max_error({a, m}, [&] { return project(matmul(a, m), w2); }));

    RealMatrix adj(3, 3);
    for (auto& v : adj.data()) v = rng.uniform();
    auto x6 = random_param({6, 2}, rng);
    auto w6 = random_const({6, 2}, rng);
    out.emplace_back("block_left_matmul", max_error({x6}, [&] { return project(block_left_matmul(adj, x6), w6); }));

    auto c1 = random_param({3, 2}, rng);
    auto wc = random_const({3, 6}, rng);
    out.emplace_back("concat_last", max_error({a, c1}, [&] { return project(concat_last({c1, a}), wc); }));
    auto ws = random_const({3, 2}, rng);
    out.emplace_back("slice_last", max_error({a}, [&] { return project(slice_last(a, 1, 3), ws); }));
    auto wr = random_const({2, 6}, rng);
    out.emplace_back("reshape", max_error({a}, [&] { return project(reshape(a, {2, 6}), wr); }));
    auto wsr = random_const({2, 4}, rng);
    out.emplace_back("slice_rows", max_error({a}, [&] { return project(slice_rows(a, 1, 3), wsr); }));
    auto x4 = random_param({4, 3}, rng);
    auto wf = random_const({2, 6}, rng);
    out.emplace_back("fold_rows", max_error({x4}, [&] { return project(fold_rows(x4, 2), wf); }));

    out.emplace_back("sum", max_error({a}, [&] { return sum(a); }));
    out.emplace_back("mean", max_error({a}, [&] { return mean(a); }));
    auto wl = random_const({3, 1}, rng);
    out.emplace_back("sum_last", max_error({a}, [&] { return project(sum_last(a), wl); }));
    auto target = random_const({3, 4}, rng);
    out.emplace_back("mae", max_error({a}, [&] { return mae(a, target); }));
    auto labels = Tensor::constant({3, 4}, {0, 1, 1, 0, 0, 0, 1, 1, 1, 0, 1, 0});
    out.emplace_back("bce_with_logits", max_error({a}, [&] { return bce_with_logits(a, labels); }));
    return out;
}

}  // namespace op_checks
