#pragma once

#include "ccpt/autodiff.hpp"
#include "ccpt/tensor.hpp"

namespace ccpt {

/// N x N cosine similarities between image rows and text rows:
/// S = normalize_rows(I) * normalize_rows(T)^T.
Var similarity_matrix(Var images, Var texts);
Tensor similarity_matrix(const Tensor& images, const Tensor& texts);

/// N x M cosines between two row sets (e.g. samples against class prompts).
Tensor cosine_scores(const Tensor& queries, const Tensor& keys);

/// Symmetric InfoNCE over a similarity matrix,
///   -1/(2N) * sum_i [ log softmax_row_i(S/tau)_ii + log softmax_col_i(S/tau)_ii ].
/// `temperature` is a 1x1 node so tau can be learned.
Var clip_loss(Var similarity, Var temperature);
Var clip_loss(Var similarity, double temperature);

/// Gradient-free evaluation for plain matrices.
double clip_loss_value(const Tensor& similarity, double temperature);

}  // namespace ccpt
