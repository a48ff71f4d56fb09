#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mtec/autograd.hpp"
#include "mtec/tensor.hpp"

using namespace mtec::nn;

namespace {

Tensor t(int r, int c, std::vector<double> v) { return Tensor(r, c, std::move(v)); }

// Fixed pseudo-random target so squared-error reductions cannot cancel
// gradient components.
Tensor target_like(const Tensor& shape) {
  Tensor tg(shape.rows, shape.cols);
  for (std::size_t i = 0; i < tg.data.size(); ++i)
    tg.data[i] = 0.1 * static_cast<double>((i * 7 + 3) % 11) - 0.4;
  return tg;
}

constexpr double kGradTol = 5e-6;

}  // namespace

TEST_SUITE("autograd") {

TEST_CASE("backward accumulates through a diamond graph") {
  Var x = make_var(t(1, 1, {3.0}));
  Var u = scale(x, 2.0);
  Var y = add(u, u);  // y = 4x
  backward(y);
  CHECK(x->grad.data[0] == 4.0);

  Var z = make_var(t(1, 1, {1.5}));
  Var w = add(z, z);
  backward(w);
  CHECK(z->grad.data[0] == 2.0);
}

TEST_CASE("matmul, transpose, slice and concat produce the right values") {
  Var a = make_var(t(2, 2, {1, 2, 3, 4}));
  Var b = make_var(t(2, 1, {5, 6}));
  Var m = matmul(a, b);
  CHECK(m->value.data == std::vector<double>{17, 39});

  Var tr = transpose(a);
  CHECK(tr->value.data == std::vector<double>{1, 3, 2, 4});

  Var sl = slice_cols(a, 1, 2);
  CHECK(sl->value.rows == 2);
  CHECK(sl->value.cols == 1);
  CHECK(sl->value.data == std::vector<double>{2, 4});

  Var cr = concat_rows(a, transpose(b));
  CHECK(cr->value.rows == 3);
  CHECK(cr->value.data == std::vector<double>{1, 2, 3, 4, 5, 6});

  Var cc = concat_cols(a, b);
  CHECK(cc->value.cols == 3);
  CHECK(cc->value.data == std::vector<double>{1, 2, 5, 3, 4, 6});

  Var rv = add_rowvec(a, make_var(t(1, 2, {10, 20})));
  CHECK(rv->value.data == std::vector<double>{11, 22, 13, 24});
  Var mv = mul_rowvec(a, make_var(t(1, 2, {10, 20})));
  CHECK(mv->value.data == std::vector<double>{10, 40, 30, 80});

  CHECK_THROWS_AS(matmul(a, make_var(t(3, 1, {1, 2, 3}))), std::invalid_argument);
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("softmax rows normalize and subtract the row max") {
  Var x = make_var(t(2, 2, {0.0, std::log(3.0), 1000.0, 1000.0 + std::log(3.0)}));
  Var s = softmax_rows(x);
  // both rows are (0.25, 0.75): the +1000 shift must not overflow
  for (int i = 0; i < 2; ++i) {
    CHECK(s->value.at(i, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s->value.at(i, 1) == doctest::Approx(0.75).epsilon(1e-12));
  }
}

TEST_CASE("layer_norm standardizes each row before gain and bias") {
  Var x = make_var(t(1, 3, {1, 2, 3}));
  Var g1 = make_var(t(1, 3, {1, 1, 1}));
  Var b0 = make_var(t(1, 3, {0, 0, 0}));
  Var y = layer_norm_rows(x, g1, b0);
  double mean = 0, var = 0;
  for (double v : y->value.data) mean += v;
  mean /= 3;
  for (double v : y->value.data) var += (v - mean) * (v - mean);
  var /= 3;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps slightly shrinks it
  CHECK(y->value.data[0] == doctest::Approx(-y->value.data[2]));

  Var g = make_var(t(1, 3, {2, 2, 2}));
  Var b = make_var(t(1, 3, {5, 5, 5}));
  Var y2 = layer_norm_rows(x, g, b);
  for (int j = 0; j < 3; ++j)
    CHECK(y2->value.data[static_cast<std::size_t>(j)] ==
          doctest::Approx(2 * y->value.data[static_cast<std::size_t>(j)] + 5).epsilon(1e-12));
}

TEST_CASE("pointwise nonlinearity values") {
  Var x = make_var(t(1, 4, {-2, 0, 1, 3}));
  Var r = relu(x);
  CHECK(r->value.data == std::vector<double>{0, 0, 1, 3});

  Var s = sigmoid(x);
  CHECK(s->value.data[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s->value.data[2] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));

  Var gl = gelu(x);
  CHECK(gl->value.data[1] == 0.0);
  for (int j = 0; j < 4; ++j) {
    const double v = x->value.data[static_cast<std::size_t>(j)];
    CHECK(gl->value.data[static_cast<std::size_t>(j)] ==
          doctest::Approx(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)))).epsilon(1e-12));
  }

  Var m = mean_rows(make_var(t(2, 2, {1, 2, 3, 4})));
  CHECK(m->value.rows == 1);
  CHECK(m->value.data == std::vector<double>{2, 3});
}

TEST_CASE("loss values match hand computation") {
  Var p = make_var(t(1, 2, {1, 2}));
  Var l = mse(p, t(1, 2, {0, 0}));
  CHECK(l->value.data[0] == doctest::Approx(2.5).epsilon(1e-12));

  Var q = make_var(t(1, 2, {0.8, 0.2}));
  Var b = bce(q, t(1, 2, {1, 0}));
  CHECK(b->value.data[0] == doctest::Approx(-std::log(0.8)).epsilon(1e-12));

  // clamp keeps saturated predictions finite
  Var sat = make_var(t(1, 1, {0.0}));
  Var bs = bce(sat, t(1, 1, {1}));
  CHECK(bs->value.data[0] == doctest::Approx(-std::log(1e-7)).epsilon(1e-9));
}

TEST_CASE("conv1d_time hand values and k=1 affine equivalence") {
  // out(t) = 10*x(t-1) + 1*x(t) + 0.1*x(t+1) + b with zero padding
  Var x = make_var(t(3, 1, {1, 2, 3}));
  Var w = make_var(t(3, 1, {10, 1, 0.1}));
  Var b = make_var(t(1, 1, {0.5}));
  Var y = conv1d_time(x, w, b, 3);
  CHECK(y->value.data[0] == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(y->value.data[1] == doctest::Approx(12.8).epsilon(1e-12));
  CHECK(y->value.data[2] == doctest::Approx(23.5).epsilon(1e-12));

  // k = 1 is exactly x @ w + b
  Var x2 = make_var(t(2, 2, {1, 2, 3, 4}));
  Var w2 = make_var(t(2, 1, {3, 4}));
  Var b2 = make_var(t(1, 1, {0.5}));
  Var affine = conv1d_time(x2, w2, b2, 1);
  Var reference = add_rowvec(matmul(x2, w2), b2);
  CHECK(affine->value.data == reference->value.data);

  CHECK_THROWS_AS(conv1d_time(x2, w2, b2, 2), std::invalid_argument);
}

TEST_CASE("gradient_check passes for every primitive") {
  Var a = make_var(t(2, 3, {0.3, -0.7, 1.2, 0.9, -0.4, 0.5}));
  Var b = make_var(t(3, 2, {0.6, -0.2, 0.8, 0.4, -0.5, 0.7}));
  Var c = make_var(t(2, 3, {-0.6, 0.2, 0.4, 1.1, -0.9, 0.3}));
  Var row = make_var(t(1, 3, {0.7, -0.3, 0.9}));

  auto check = [&](const char* name, const std::function<Var()>& f, std::vector<Var> params) {
    INFO(name);
    CHECK(gradient_check(f, params) < kGradTol);
  };

  check("matmul", [&] { return mse(matmul(a, b), target_like(t(2, 2, {0, 0, 0, 0}))); }, {a, b});
  check("add", [&] { return mse(add(a, c), target_like(a->value)); }, {a, c});
  check("add_rowvec", [&] { return mse(add_rowvec(a, row), target_like(a->value)); }, {a, row});
  check("mul_rowvec", [&] { return mse(mul_rowvec(a, row), target_like(a->value)); }, {a, row});
  check("scale", [&] { return mse(scale(a, -1.7), target_like(a->value)); }, {a});
  check("transpose", [&] { return mse(transpose(a), target_like(b->value)); }, {a});
  check("slice_cols", [&] { return mse(slice_cols(a, 1, 3), target_like(t(2, 2, {0, 0, 0, 0}))); },
        {a});
  check("concat_rows", [&] { return mse(concat_rows(a, c), target_like(t(4, 3, std::vector<double>(12)))); },
        {a, c});
  check("concat_cols", [&] { return mse(concat_cols(a, c), target_like(t(2, 6, std::vector<double>(12)))); },
        {a, c});
  check("softmax_rows", [&] { return mse(softmax_rows(a), target_like(a->value)); }, {a});
  check("layer_norm_rows",
        [&] {
          Var gain = make_var(t(1, 3, {1.2, 0.8, -0.5}));
          return mse(layer_norm_rows(a, gain, row), target_like(a->value));
        },
        {a, row});
  check("layer_norm gain",
        [&] { return mse(layer_norm_rows(a, row, make_var(t(1, 3, {0, 0, 0}))), target_like(a->value)); },
        {row});
  check("gelu", [&] { return mse(gelu(a), target_like(a->value)); }, {a});
  // relu inputs sit well away from the kink at 0
  check("relu", [&] { return mse(relu(a), target_like(a->value)); }, {a});
  check("sigmoid", [&] { return mse(sigmoid(a), target_like(a->value)); }, {a});
  check("mean_rows", [&] { return mse(mean_rows(a), target_like(t(1, 3, {0, 0, 0}))); }, {a});
  check("conv1d_time",
        [&] {
          Var w = make_var(t(9, 2, std::vector<double>{0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8,
                                                       0.9, 0.2, -0.3, 0.1, 0.5, -0.6, 0.4, 0.8,
                                                       -0.1, 0.3}));
          Var bias = make_var(t(1, 2, {0.05, -0.07}));
          return mse(conv1d_time(a, w, bias, 3), target_like(t(2, 2, {0, 0, 0, 0})));
        },
        {a});
  // bce predictions stay inside the clamp band
  Var probs = make_var(t(1, 4, {0.2, 0.45, 0.7, 0.85}));
  check("bce", [&] { return bce(probs, t(1, 4, {1, 0, 1, 0})); }, {probs});
  check("mse", [&] { return mse(a, target_like(a->value)); }, {a});
}

TEST_CASE("gradient_check catches an unrecorded dependency") {
  Var x = make_var(t(1, 1, {2.0}));
  // value depends on x but the tape never sees it: analytic grad is 0,
  // numeric is 3, so the relative error must be ~1
  auto f = [&] { return make_var(t(1, 1, {3.0 * x->value.data[0]})); };
  CHECK(gradient_check(f, {x}) > 0.9);
}

TEST_CASE("composite graph gradient survives a full check") {
  Var x = make_var(t(3, 4, {0.2, -0.5, 0.8, 0.1, -0.3, 0.6, -0.9, 0.4, 0.7, -0.1, 0.5, -0.6}));
  Var wq = make_var(t(4, 4, std::vector<double>{0.3, -0.1, 0.2, 0.4, -0.2, 0.5, 0.1, -0.3,
                                                0.6, 0.2, -0.4, 0.1, -0.5, 0.3, 0.2, 0.6}));
  Var gain = make_var(t(1, 4, {1.1, 0.9, 1.0, 0.8}));
  Var bias = make_var(t(1, 4, {0.02, -0.03, 0.01, 0.04}));
  auto f = [&] {
    Var q = matmul(x, wq);
    Var attn = matmul(softmax_rows(scale(matmul(q, transpose(q)), 0.5)), q);
    Var normed = layer_norm_rows(add(attn, x), gain, bias);
    Var pooled = mean_rows(gelu(normed));
    return bce(sigmoid(pooled), t(1, 4, {1, 0, 1, 0}));
  };
  CHECK(gradient_check(f, {x, wq, gain, bias}) < 1e-5);
}

}  // TEST_SUITE
