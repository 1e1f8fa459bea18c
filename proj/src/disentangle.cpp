#include "pmdx/disentangle.hpp"

#include <cmath>

namespace pmdx {

namespace {

double safe_cos(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "cosine");
    const double ra = a.norm2(), rb = b.norm2();
    if (ra < 1e-12 || rb < 1e-12) return 0.0;
    double d = 0.0;
    for (int i = 0; i < a.size(); ++i) d += a[i] * b[i];
    return d / (ra * rb);
}

} // namespace

double orthogonal_loss(const std::vector<DisentangledPair>& pairs) {
    if (pairs.size() < 2) return 0.0;
    double total = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i)
        for (size_t j = 0; j < pairs.size(); ++j) {
            if (i == j) continue;
            total += -safe_cos(pairs[i].common, pairs[j].common) +
                     std::fabs(safe_cos(pairs[i].specific, pairs[j].specific));
        }
    return 0.5 * total;
}

double mi_penalty(const Tensor& batch_common, const Tensor& batch_specific) {
    if (batch_common.rank() != 2 || batch_specific.rank() != 2)
        throw ShapeError("mi_penalty: expected [n, dim] matrices");
    const int n = batch_common.dim(0);
    if (batch_specific.dim(0) != n) throw ShapeError("mi_penalty: row count mismatch");
    if (n < 2) throw InputError("mi_penalty: degenerate batch (need n >= 2)");
    const int dc = batch_common.dim(1);
    const int ds = batch_specific.dim(1);

    auto standardize = [n](const Tensor& M, int cols) {
        Tensor Z({n, cols});
        for (int j = 0; j < cols; ++j) {
            double mu = 0.0;
            for (int i = 0; i < n; ++i) mu += M.at(i, j);
            mu /= n;
            double var = 0.0;
            for (int i = 0; i < n; ++i) {
                const double d = M.at(i, j) - mu;
                var += d * d;
            }
            var /= n;
            const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
            for (int i = 0; i < n; ++i) Z.at(i, j) = (M.at(i, j) - mu) * inv;
        }
        return Z;
    };

    const Tensor zc = standardize(batch_common, dc);
    const Tensor zs = standardize(batch_specific, ds);

    double penalty = 0.0;
    for (int a = 0; a < dc; ++a)
        for (int b = 0; b < ds; ++b) {
            double cov = 0.0;
            for (int i = 0; i < n; ++i) cov += zc.at(i, a) * zs.at(i, b);
            cov /= n;
            penalty += cov * cov;
        }
    return penalty;
}

} // namespace pmdx
