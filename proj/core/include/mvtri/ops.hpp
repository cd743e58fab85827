#pragma once

#include <vector>

#include "mvtri/graph.hpp"

namespace mvtri::ad {

// Elementwise / broadcast arithmetic. Row-vector variants broadcast a
// length-C vector over the rows of an (N, C) tensor.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_rowvec(const Var& x, const Var& v);
Var mul_rowvec(const Var& x, const Var& v);
Var repeat_rows(const Var& v, int64_t n);  // (1,C) or (C) -> (n,C)

// Matrix ops on rank-2 tensors (higher ranks fold into rows).
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// Activations.
Var relu(const Var& a);
Var gelu(const Var& a);  // tanh approximation
Var silu(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);

// Row-wise normalizations.
Var layer_norm_rows(const Var& x, double eps = 1e-6);
Var softmax_rows(const Var& x);

// Shape manipulation (materializing; cheap at this project's scale).
Var reshape(const Var& x, std::vector<int64_t> shape);
Var slice_cols(const Var& x, int64_t c0, int64_t len);
Var slice_rows(const Var& x, int64_t r0, int64_t len);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(const Var& table, std::vector<int64_t> indices);

// Reductions.
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var mse(const Var& a, const Var& b);  // mean squared error, scalar

}  // namespace mvtri::ad
