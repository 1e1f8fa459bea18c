#pragma once

// Central finite-difference gradient checking used across the test suites.
// The oracle is independent of the tape's backward pass: it re-evaluates the
// forward graph at perturbed inputs.

#include <cmath>
#include <functional>
#include <vector>

#include "pmdx/rng.hpp"
#include "pmdx/tape.hpp"
#include "pmdx/tensor.hpp"

namespace pmdx_test {

using pmdx::Rng;
using pmdx::Tensor;
namespace ad = pmdx::ad;

// build(tape, leaves) must return a scalar Var; leaves[i] is a leaf bound to
// params[i] at call time.
using BuildFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

inline double eval_scalar(const std::vector<Tensor>& params, const BuildFn& build) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    leaves.reserve(params.size());
    for (const Tensor& p : params) leaves.push_back(ad::make_leaf(tape, p));
    ad::Var root = build(tape, leaves);
    return root.val()[0];
}

// Returns the maximum relative error between tape gradients and central
// finite differences over all (optionally subsampled) coordinates.
inline double max_grad_rel_error(std::vector<Tensor> params, const BuildFn& build,
                                 int stride = 1, double h0 = 1e-5) {
    // analytic gradients
    std::vector<Tensor> analytic;
    {
        ad::Tape tape;
        std::vector<ad::Var> leaves;
        for (const Tensor& p : params) leaves.push_back(ad::make_leaf(tape, p));
        ad::Var root = build(tape, leaves);
        tape.backward(root.id);
        for (const ad::Var& v : leaves) analytic.push_back(tape.grad(v.id));
    }

    double worst = 0.0;
    for (size_t k = 0; k < params.size(); ++k) {
        for (int i = 0; i < params[k].size(); i += stride) {
            const double x0 = params[k][i];
            const double h = h0 * std::max(1.0, std::fabs(x0));
            params[k][i] = x0 + h;
            const double fp = eval_scalar(params, build);
            params[k][i] = x0 - h;
            const double fm = eval_scalar(params, build);
            params[k][i] = x0;
            const double fd = (fp - fm) / (2.0 * h);
            const double ga = analytic[k][i];
            const double denom = std::max(std::fabs(ga) + std::fabs(fd), 1e-6);
            worst = std::max(worst, std::fabs(ga - fd) / denom);
        }
    }
    return worst;
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

} // namespace pmdx_test
