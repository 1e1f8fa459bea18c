#include "pmdx/fusion_align.hpp"

#include <cmath>
#include <cstdio>

namespace pmdx {

namespace {

double mse_value(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "alignment_loss");
    double s = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / a.size();
}

} // namespace

double alignment_loss(const Tensor& f1, const std::optional<Tensor>& f2,
                      const std::optional<Tensor>& f3) {
    double total = 0.0;
    if (f2) total += mse_value(f1, *f2);
    if (f2 && f3) total += mse_value(*f2, *f3);
    return total;
}

std::array<double, 4> contrastive_scores(const Tensor& f_r, const Tensor& criteria, double tau) {
    if (tau <= 0.0) throw ConfigError("contrastive temperature must be > 0");
    if (criteria.rank() != 2 || criteria.dim(0) != 4 || criteria.dim(1) != f_r.size())
        throw ShapeError("contrastive_scores: criteria must be [4, d] with d = |f_r|");

    const double rf = f_r.norm2();
    std::array<double, 4> logits{};
    for (int j = 0; j < 4; ++j) {
        double cosv = 0.0;
        const double rc = [&] {
            double s = 0.0;
            for (int i = 0; i < f_r.size(); ++i) s += criteria.at(j, i) * criteria.at(j, i);
            return std::sqrt(s);
        }();
        if (rf >= 1e-12 && rc >= 1e-12) {
            double dot = 0.0;
            for (int i = 0; i < f_r.size(); ++i) dot += f_r[i] * criteria.at(j, i);
            cosv = dot / (rf * rc);
        }
        logits[static_cast<size_t>(j)] = cosv / tau;
    }

    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::array<double, 4> probs{};
    double z = 0.0;
    for (int j = 0; j < 4; ++j) {
        probs[static_cast<size_t>(j)] = std::exp(logits[static_cast<size_t>(j)] - mx);
        z += probs[static_cast<size_t>(j)];
    }
    for (double& p : probs) p /= z;
    return probs;
}

double guideline_contrastive_loss(const std::array<double, 4>& probs, SubType label) {
    double sum = 0.0;
    for (double p : probs) sum += p;
    if (std::fabs(sum - 1.0) > 1e-8)
        throw InputError("guideline loss: probabilities must sum to 1");
    double p = probs[static_cast<size_t>(label)];
    if (p < 1e-12) {
        std::fprintf(stderr, "[pmdx] warning: contrastive score underflow, clamped at 1e-12\n");
        p = 1e-12;
    }
    return -std::log(p);
}

} // namespace pmdx
