#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mtec/tensor.hpp"

namespace mtec::nn {

// Reverse-mode tape. Every op records its inputs and a closure that scatters
// the output gradient back into them. Node ids increase with creation order,
// so sorting reachable nodes by id descending is a valid topological order
// and keeps backward passes bit-for-bit reproducible.
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> backward_fn;  // empty for leaves
  std::int64_t id = 0;
};

using Var = std::shared_ptr<Node>;

Var make_var(Tensor value);

// Seeds root.grad with ones and runs every recorded closure reachable from
// root, accumulating into leaf grads.
void backward(const Var& root);

// ---- primitive ops ----------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);               // same shape
Var add_rowvec(const Var& x, const Var& b);        // (r,c) + (1,c)
Var mul_rowvec(const Var& x, const Var& g);        // (r,c) * (1,c) elementwise
Var scale(const Var& x, double c);
Var transpose(const Var& x);
Var slice_cols(const Var& x, int c0, int c1);      // columns [c0, c1)
Var concat_rows(const Var& a, const Var& b);
Var concat_cols(const Var& a, const Var& b);
Var softmax_rows(const Var& x);                    // max-subtracted
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var gelu(const Var& x);                            // exact erf form
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var mean_rows(const Var& x);                       // (r,c) -> (1,c)

// 1-d convolution over the row (time) axis with zero padding, kernel size k
// odd. x is (T, d_in), w is (k*d_in, d_out) with taps stored tap-major,
// b is (1, d_out). k = 1 reduces to an affine token projection.
Var conv1d_time(const Var& x, const Var& w, const Var& b, int k);

// Scalar losses against constant targets.
Var mse(const Var& pred, const Tensor& target);
// Binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
Var bce(const Var& pred, const Tensor& target);

// ---- verification -----------------------------------------------------------

// Compares analytic gradients of f() (a scalar-producing rebuildable graph
// over `params`) against central finite differences. Returns the worst
// relative error, |a - n| / max(|a|, |n|, 1e-6).
double gradient_check(const std::function<Var()>& f, const std::vector<Var>& params,
                      double h = 1e-5);

}  // namespace mtec::nn
