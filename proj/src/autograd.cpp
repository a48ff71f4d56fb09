#include "mtec/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "mtec/common.hpp"

namespace mtec::nn {

namespace {

std::int64_t next_id() {
  static std::int64_t counter = 0;
  return ++counter;
}

Var make_op(Tensor value, std::vector<Var> inputs) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->grad = Tensor(n->value.rows, n->value.cols);
  n->inputs = std::move(inputs);
  n->id = next_id();
  return n;
}

void check_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

}  // namespace

Var make_var(Tensor value) { return make_op(std::move(value), {}); }

void backward(const Var& root) {
  if (!root) throw std::invalid_argument("backward on null var");
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& in : n->inputs) stack.push_back(in.get());
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
  for (double& g : root->grad.data) g = 1.0;
  for (Node* n : order)
    if (n->backward_fn) n->backward_fn();
}

Var matmul(const Var& a, const Var& b) {
  check_shape(a->value.cols == b->value.rows, "matmul");
  const int m = a->value.rows, k = a->value.cols, n = b->value.cols;
  Tensor out(m, n);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = a->value.at(i, p);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) out.at(i, j) += av * b->value.at(p, j);
    }
  Var r = make_op(std::move(out), {a, b});
  Node* rn = r.get();
  Node* an = a.get();
  Node* bn = b.get();
  rn->backward_fn = [rn, an, bn, m, k, n] {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double g = rn->grad.at(i, j);
        if (g == 0.0) continue;
        for (int p = 0; p < k; ++p) {
          an->grad.at(i, p) += g * bn->value.at(p, j);
          bn->grad.at(p, j) += g * an->value.at(i, p);
        }
      }
  };
  return r;
}

Var add(const Var& a, const Var& b) {
  check_shape(a->value.same_shape(b->value), "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  Var r = make_op(std::move(out), {a, b});
  Node* rn = r.get();
  Node* an = a.get();
  Node* bn = b.get();
  rn->backward_fn = [rn, an, bn] {
    for (std::size_t i = 0; i < rn->grad.size(); ++i) {
      an->grad.data[i] += rn->grad.data[i];
      bn->grad.data[i] += rn->grad.data[i];
    }
  };
  return r;
}

Var add_rowvec(const Var& x, const Var& b) {
  check_shape(b->value.rows == 1 && b->value.cols == x->value.cols, "add_rowvec");
  Tensor out = x->value;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) += b->value.at(0, j);
  Var r = make_op(std::move(out), {x, b});
  Node* rn = r.get();
  Node* xn = x.get();
  Node* bn = b.get();
  rn->backward_fn = [rn, xn, bn] {
    for (int i = 0; i < rn->grad.rows; ++i)
      for (int j = 0; j < rn->grad.cols; ++j) {
        xn->grad.at(i, j) += rn->grad.at(i, j);
        bn->grad.at(0, j) += rn->grad.at(i, j);
      }
  };
  return r;
}

Var mul_rowvec(const Var& x, const Var& g) {
  check_shape(g->value.rows == 1 && g->value.cols == x->value.cols, "mul_rowvec");
  Tensor out = x->value;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) *= g->value.at(0, j);
  Var r = make_op(std::move(out), {x, g});
  Node* rn = r.get();
  Node* xn = x.get();
  Node* gn = g.get();
  rn->backward_fn = [rn, xn, gn] {
    for (int i = 0; i < rn->grad.rows; ++i)
      for (int j = 0; j < rn->grad.cols; ++j) {
        xn->grad.at(i, j) += rn->grad.at(i, j) * gn->value.at(0, j);
        gn->grad.at(0, j) += rn->grad.at(i, j) * xn->value.at(i, j);
      }
  };
  return r;
}

Var scale(const Var& x, double c) {
  Tensor out = x->value;
  for (double& v : out.data) v *= c;
  Var r = make_op(std::move(out), {x});
  Node* rn = r.get();
  Node* xn = x.get();
  rn->backward_fn = [rn, xn, c] {
    for (std::size_t i = 0; i < rn->grad.size(); ++i) xn->grad.data[i] += c * rn->grad.data[i];
  };
  return r;
}

Var transpose(const Var& x) {
  Tensor out(x->value.cols, x->value.rows);
  for (int i = 0; i < x->value.rows; ++i)
    for (int j = 0; j < x->value.cols; ++j) out.at(j, i) = x->value.at(i, j);
  Var r = make_op(std::move(out), {x});
  Node* rn = r.get();
  Node* xn = x.get();
  rn->backward_fn = [rn, xn] {
    for (int i = 0; i < rn->grad.rows; ++i)
      for (int j = 0; j < rn->grad.cols; ++j) xn->grad.at(j, i) += rn->grad.at(i, j);
  };
  return r;
}

Var slice_cols(const Var& x, int c0, int c1) {
  check_shape(0 <= c0 && c0 < c1 && c1 <= x->value.cols, "slice_cols");
  Tensor out(x->value.rows, c1 - c0);
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) = x->value.at(i, c0 + j);
  Var r = make_op(std::move(out), {x});
  Node* rn = r.get();
  Node* xn = x.get();
  rn->backward_fn = [rn, xn, c0] {
    for (int i = 0; i < rn->grad.rows; ++i)
      for (int j = 0; j < rn->grad.cols; ++j) xn->grad.at(i, c0 + j) += rn->grad.at(i, j);
  };
  return r;
}

Var concat_rows(const Var& a, const Var& b) {
  check_shape(a->value.cols == b->value.cols, "concat_rows");
  Tensor out(a->value.rows + b->value.rows, a->value.cols);
  std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
  std::copy(b->value.data.begin(), b->value.data.end(), out.data.begin() + a->value.size());
  Var r = make_op(std::move(out), {a, b});
  Node* rn = r.get();
  Node* an = a.get();
  Node* bn = b.get();
  rn->backward_fn = [rn, an, bn] {
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad.data[i] += rn->grad.data[i];
    for (std::size_t i = 0; i < bn->grad.size(); ++i)
      bn->grad.data[i] += rn->grad.data[an->grad.size() + i];
  };
  return r;
}

Var concat_cols(const Var& a, const Var& b) {
  check_shape(a->value.rows == b->value.rows, "concat_cols");
  Tensor out(a->value.rows, a->value.cols + b->value.cols);
  for (int i = 0; i < out.rows; ++i) {
    for (int j = 0; j < a->value.cols; ++j) out.at(i, j) = a->value.at(i, j);
    for (int j = 0; j < b->value.cols; ++j) out.at(i, a->value.cols + j) = b->value.at(i, j);
  }
  Var r = make_op(std::move(out), {a, b});
  Node* rn = r.get();
  Node* an = a.get();
  Node* bn = b.get();
  rn->backward_fn = [rn, an, bn] {
    for (int i = 0; i < rn->grad.rows; ++i) {
      for (int j = 0; j < an->grad.cols; ++j) an->grad.at(i, j) += rn->grad.at(i, j);
      for (int j = 0; j < bn->grad.cols; ++j)
        bn->grad.at(i, j) += rn->grad.at(i, an->grad.cols + j);
    }
  };
  return r;
}

Var softmax_rows(const Var& x) {
  Tensor out = x->value;
  for (int i = 0; i < out.rows; ++i) {
    double mx = out.at(i, 0);
    for (int j = 1; j < out.cols; ++j) mx = std::max(mx, out.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < out.cols; ++j) {
      out.at(i, j) = std::exp(out.at(i, j) - mx);
      sum += out.at(i, j);
    }
    for (int j = 0; j < out.cols; ++j) out.at(i, j) /= sum;
  }
  Var r = make_op(std::move(out), {x});
  Node* rn = r.get();
  Node* xn = x.get();
  rn->backward_fn = [rn, xn] {
    for (int i = 0; i < rn->grad.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < rn->grad.cols; ++j) dot += rn->grad.at(i, j) * rn->value.at(i, j);
      for (int j = 0; j < rn->grad.cols; ++j)
        xn->grad.at(i, j) += rn->value.at(i, j) * (rn->grad.at(i, j) - dot);
    }
  };
  return r;
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  const int rows = x->value.rows, cols = x->value.cols;
  check_shape(gain->value.rows == 1 && gain->value.cols == cols, "layer_norm gain");
  check_shape(bias->value.rows == 1 && bias->value.cols == cols, "layer_norm bias");
  Tensor out(rows, cols);
  // keep per-row stats for backward
  auto mean = std::make_shared<std::vector<double>>(rows);
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (int i = 0; i < rows; ++i) {
    double mu = 0.0;
    for (int j = 0; j < cols; ++j) mu += x->value.at(i, j);
    mu /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = x->value.at(i, j) - mu;
      var += d * d;
    }
    var /= cols;
    const double is = 1.0 / std::sqrt(var + eps);
    (*mean)[static_cast<std::size_t>(i)] = mu;
    (*inv_std)[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < cols; ++j)
      out.at(i, j) = (x->value.at(i, j) - mu) * is * gain->value.at(0, j) + bias->value.at(0, j);
  }
  Var r = make_op(std::move(out), {x, gain, bias});
  Node* rn = r.get();
  Node* xn = x.get();
  Node* gn = gain.get();
  Node* bn = bias.get();
  rn->backward_fn = [rn, xn, gn, bn, mean, inv_std, rows, cols] {
    for (int i = 0; i < rows; ++i) {
      const double mu = (*mean)[static_cast<std::size_t>(i)];
      const double is = (*inv_std)[static_cast<std::size_t>(i)];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int j = 0; j < cols; ++j) {
        const double xhat = (xn->value.at(i, j) - mu) * is;
        const double dy = rn->grad.at(i, j);
        const double dxhat = dy * gn->value.at(0, j);
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        gn->grad.at(0, j) += dy * xhat;
        bn->grad.at(0, j) += dy;
      }
      for (int j = 0; j < cols; ++j) {
        const double xhat = (xn->value.at(i, j) - mu) * is;
        const double dxhat = rn->grad.at(i, j) * gn->value.at(0, j);
        xn->grad.at(i, j) +=
            is * (dxhat - sum_dxhat / cols - xhat * sum_dxhat_xhat / cols);
      }
    }
  };
  return r;
}

Var gelu(const Var& x) {
  Tensor out = x->value;
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  Var r = make_op(std::move(out), {x});
  Node* rn = r.get();
  Node* xn = x.get();
  rn->backward_fn = [rn, xn] {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    for (std::size_t i = 0; i < rn->grad.size(); ++i) {
      const double v = xn->value.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      xn->grad.data[i] += rn->grad.data[i] * (cdf + v * pdf);
    }
  };
  return r;
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  Var r = make_op(std::move(out), {x});
  Node* rn = r.get();
  Node* xn = x.get();
  rn->backward_fn = [rn, xn] {
    for (std::size_t i = 0; i < rn->grad.size(); ++i)
      if (xn->value.data[i] > 0.0) xn->grad.data[i] += rn->grad.data[i];
  };
  return r;
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  Var r = make_op(std::move(out), {x});
  Node* rn = r.get();
  Node* xn = x.get();
  rn->backward_fn = [rn, xn] {
    for (std::size_t i = 0; i < rn->grad.size(); ++i) {
      const double y = rn->value.data[i];
      xn->grad.data[i] += rn->grad.data[i] * y * (1.0 - y);
    }
  };
  return r;
}

Var mean_rows(const Var& x) {
  const int rows = x->value.rows, cols = x->value.cols;
  check_shape(rows > 0, "mean_rows");
  Tensor out(1, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out.at(0, j) += x->value.at(i, j);
  for (double& v : out.data) v /= rows;
  Var r = make_op(std::move(out), {x});
  Node* rn = r.get();
  Node* xn = x.get();
  rn->backward_fn = [rn, xn, rows, cols] {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) xn->grad.at(i, j) += rn->grad.at(0, j) / rows;
  };
  return r;
}

Var conv1d_time(const Var& x, const Var& w, const Var& b, int k) {
  if (k <= 0 || k % 2 == 0) throw std::invalid_argument("conv1d_time kernel must be odd");
  const int T = x->value.rows, din = x->value.cols;
  check_shape(w->value.rows == k * din, "conv1d_time weight");
  const int dout = w->value.cols;
  check_shape(b->value.rows == 1 && b->value.cols == dout, "conv1d_time bias");
  const int half = k / 2;
  Tensor out(T, dout);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < k; ++j) {
      const int src = t + j - half;
      if (src < 0 || src >= T) continue;
      for (int c = 0; c < din; ++c) {
        const double xv = x->value.at(src, c);
        if (xv == 0.0) continue;
        const int wr = j * din + c;
        for (int o = 0; o < dout; ++o) out.at(t, o) += xv * w->value.at(wr, o);
      }
    }
  for (int t = 0; t < T; ++t)
    for (int o = 0; o < dout; ++o) out.at(t, o) += b->value.at(0, o);
  Var r = make_op(std::move(out), {x, w, b});
  Node* rn = r.get();
  Node* xn = x.get();
  Node* wn = w.get();
  Node* bn = b.get();
  rn->backward_fn = [rn, xn, wn, bn, T, din, dout, k, half] {
    for (int t = 0; t < T; ++t)
      for (int o = 0; o < dout; ++o) {
        const double g = rn->grad.at(t, o);
        if (g == 0.0) continue;
        bn->grad.at(0, o) += g;
        for (int j = 0; j < k; ++j) {
          const int src = t + j - half;
          if (src < 0 || src >= T) continue;
          for (int c = 0; c < din; ++c) {
            const int wr = j * din + c;
            xn->grad.at(src, c) += g * wn->value.at(wr, o);
            wn->grad.at(wr, o) += g * xn->value.at(src, c);
          }
        }
      }
  };
  return r;
}

Var mse(const Var& pred, const Tensor& target) {
  check_shape(pred->value.same_shape(target), "mse");
  const double n = static_cast<double>(pred->value.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred->value.size(); ++i) {
    const double d = pred->value.data[i] - target.data[i];
    acc += d * d;
  }
  Tensor out(1, 1);
  out.data[0] = acc / n;
  Var r = make_op(std::move(out), {pred});
  Node* rn = r.get();
  Node* pn = pred.get();
  Tensor tgt = target;
  rn->backward_fn = [rn, pn, tgt = std::move(tgt), n] {
    const double g = rn->grad.data[0];
    for (std::size_t i = 0; i < pn->value.size(); ++i)
      pn->grad.data[i] += g * 2.0 * (pn->value.data[i] - tgt.data[i]) / n;
  };
  return r;
}

Var bce(const Var& pred, const Tensor& target) {
  check_shape(pred->value.same_shape(target), "bce");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const double n = static_cast<double>(pred->value.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred->value.size(); ++i) {
    const double p = std::clamp(pred->value.data[i], lo, hi);
    const double y = target.data[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  Tensor out(1, 1);
  out.data[0] = acc / n;
  Var r = make_op(std::move(out), {pred});
  Node* rn = r.get();
  Node* pn = pred.get();
  Tensor tgt = target;
  rn->backward_fn = [rn, pn, tgt = std::move(tgt), n] {
    const double g = rn->grad.data[0];
    for (std::size_t i = 0; i < pn->value.size(); ++i) {
      const double raw = pn->value.data[i];
      if (raw <= lo || raw >= hi) continue;  // clamped region is flat
      pn->grad.data[i] += g * (raw - tgt.data[i]) / (raw * (1.0 - raw)) / n;
    }
  };
  return r;
}

double gradient_check(const std::function<Var()>& f, const std::vector<Var>& params, double h) {
  for (const auto& p : params)
    for (double& g : p->grad.data) g = 0.0;
  Var loss = f();
  if (loss->value.size() != 1) throw std::invalid_argument("gradient_check needs scalar loss");
  backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p->grad);

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t i = 0; i < params[pi]->value.size(); ++i) {
      const double saved = params[pi]->value.data[i];
      params[pi]->value.data[i] = saved + h;
      const double lp = f()->value.data[0];
      params[pi]->value.data[i] = saved - h;
      const double lm = f()->value.data[0];
      params[pi]->value.data[i] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[pi].data[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace mtec::nn
