#pragma once

#include <vector>

#include "pmdx/tensor.hpp"

namespace pmdx {

// Common/specific halves of one adapted text feature.
struct DisentangledPair {
    Tensor common;   // [d_c]
    Tensor specific; // [d_s]
    char source = 'p'; // 'p', 'h' or 'd'
};

// Pairwise orthogonality objective over the text components:
//   1/2 * sum over ordered pairs (excluding self) of
//     -cos(common_i, common_j) + |cos(specific_i, specific_j)|
// Zero vectors contribute cos := 0. Fewer than two pairs -> 0.
double orthogonal_loss(const std::vector<DisentangledPair>& pairs);

// Decorrelation surrogate for the mutual-information penalty of one text
// component: squared Frobenius norm of the cross-covariance between
// column-standardized common and specific batch features. Columns with zero
// variance are standardized to zero. Requires n >= 2 rows.
double mi_penalty(const Tensor& batch_common, const Tensor& batch_specific);

} // namespace pmdx
