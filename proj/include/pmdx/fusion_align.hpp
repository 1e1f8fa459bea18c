#pragma once

#include <array>
#include <optional>

#include "pmdx/subject.hpp"
#include "pmdx/tensor.hpp"

namespace pmdx {

// Cross-stage alignment: sum of MSE(f^k, f^{k+1}) over available consecutive
// pairs (value only; the training graph applies the stop-gradient on the
// later feature).
double alignment_loss(const Tensor& f1, const std::optional<Tensor>& f2,
                      const std::optional<Tensor>& f3);

// Softmax over cosine(f_r, criterion_j) / tau; criteria is a [4, d] matrix of
// unit rows. tau must be positive.
std::array<double, 4> contrastive_scores(const Tensor& f_r, const Tensor& criteria, double tau);

// -log p[label], with p floored at 1e-12 (a warning is printed when the floor
// engages).
double guideline_contrastive_loss(const std::array<double, 4>& probs, SubType label);

} // namespace pmdx
