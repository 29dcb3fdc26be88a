#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vqatom/nn/tape.hpp"
#include "vqatom/util/rng.hpp"

// Differentiable operations over Tape variables. Every op checks shapes and
// throws ShapeError on mismatch. Broadcasting is limited to adding a 1 x d
// row to every row of an n x d matrix.
namespace vqatom::nn {

Var matmul(const Var& a, const Var& b);
// a * b^T without materializing the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var mul_const(const Var& a, const Tensor& mask);
Var scale(const Var& a, double factor);
// a * s where s is a 1 x 1 variable.
Var mul_scalar(const Var& a, const Var& s);

Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);

// axis 1 normalizes each row, axis 0 each column.
Var softmax(const Var& a, int axis = 1);
// Row softmax restricted to columns with key_valid[c] == true; masked
// columns get exactly zero weight.
Var masked_softmax_rows(const Var& a, const std::vector<bool>& key_valid);

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
// x / max(||x||, eps) along the axis (1 = rows, 0 = columns).
Var l2_normalize(const Var& x, int axis = 1, double eps = 1e-12);

// Mean over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);
// Mean binary cross-entropy with logits; logits is n x 1 (or 1 x n).
Var bce_with_logits(const Var& logits, std::span<const double> labels);
// Mean of squared elementwise differences.
Var mse(const Var& a, const Var& b);

Var concat(const std::vector<Var>& parts, int axis);
Var sum(const Var& a);
Var sum(const Var& a, int axis);
Var mean(const Var& a);
Var mean(const Var& a, int axis);

Var gather_rows(const Var& a, std::span<const std::size_t> index);
Var scatter_add_rows(const Var& a, std::span<const std::size_t> index, std::size_t out_rows);
Var slice_cols(const Var& a, std::size_t start, std::size_t width);

Var minimum(const Var& a, const Var& b);

// a / (row sum + eps) and a / (column sum + eps).
Var normalize_rows_by_sum(const Var& a, double eps);
Var normalize_cols_by_sum(const Var& a, double eps);

// Mean of the k largest entries (ties resolved toward the lower flat index).
Var top_k_mean(const Var& a, std::size_t k);

// For a square matrix c: mean over i < j of max(0, c[i,j] - margin)^2.
// Zero when there are fewer than two rows.
Var pair_hinge_sq_mean(const Var& c, double margin);

// Inverted dropout; identity when p == 0.
Var dropout(const Var& a, double p, SeededRng& rng);

}  // namespace vqatom::nn
