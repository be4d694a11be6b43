#include "tensor/graph.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <numeric>

#include "common/errors.hpp"
#include "tensor/special.hpp"

namespace ehrgen::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const Tensor& t) { return ConstMap(t.data.data(), static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols)); }
MutMap mmap(Tensor& t) { return MutMap(t.data.data(), static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols)); }

void require(bool ok, std::string_view op, const std::string& what) {
  if (!ok) throw ValidationError(std::string(op) + ": " + what);
}

// Applies f elementwise and registers dx += dy * df(x, y).
template <class F, class DF>
Var unary(Graph& g, std::string_view op, Var a, F f, DF df) {
  const Tensor& x = g.value(a);
  Tensor y(x.rows, x.cols);
  for (size_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
  return g.push(op, std::move(y), {a}, [df](Graph& gr, uint32_t self) {
    Var in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const Tensor& x = gr.value(in);
    const Tensor& y = gr.value(Var{self});
    const Tensor& dy = gr.out_grad(self);
    Tensor& dx = gr.grad_buffer(in);
    for (size_t i = 0; i < x.size(); ++i) dx.data[i] += dy.data[i] * df(x.data[i], y.data[i]);
  });
}

}  // namespace

Tensor Tensor::column(std::span<const double> values) {
  Tensor t(values.size(), 1);
  std::copy(values.begin(), values.end(), t.data.begin());
  return t;
}

double Tensor::item() const {
  if (data.size() != 1) throw ValidationError("item() on tensor of shape " + shape_string());
  return data[0];
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

std::string Tensor::shape_string() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }

size_t Segments::total() const { return std::accumulate(lengths.begin(), lengths.end(), size_t{0}); }

// --- graph ----------------------------------------------------------------------------

Var Graph::constant(Tensor value, std::string_view op) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<uint32_t>(nodes_.size() - 1)};
}

Var Graph::param(Parameter& p) {
  if (!p.grad.same_shape(p.value)) p.grad = Tensor(p.value.rows, p.value.cols);
  Node n;
  n.op = "param";
  n.param = &p;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<uint32_t>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_[v.index];
  return n.param ? n.param->value : n.value;
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.index];
  if (n.param) return n.param->grad;
  if (n.grad.size() == 0) {
    const Tensor& val = value(v);
    n.grad = Tensor(val.rows, val.cols);
  }
  return n.grad;
}

const Tensor& Graph::grad(Var v) { return grad_buffer(v); }

Var Graph::push(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (Var in : inputs) n.needs_grad = n.needs_grad || nodes_[in.index].needs_grad;
  n.inputs = std::move(inputs);
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<uint32_t>(nodes_.size() - 1)};
}

void Graph::backward(Var loss) {
  require(value(loss).size() == 1, "backward", "loss must be a scalar");
  grad_buffer(loss).data[0] += 1.0;
  for (uint32_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

std::optional<Var> Graph::first_non_finite() const {
  for (uint32_t i = 0; i < nodes_.size(); ++i) {
    for (double x : value(Var{i}).data)
      if (!std::isfinite(x)) return Var{i};
  }
  return std::nullopt;
}

// --- elementwise ------------------------------------------------------------------------

Var add(Graph& g, Var a, Var b) {
  const Tensor &x = g.value(a), &y = g.value(b);
  require(x.same_shape(y), "add", "shape mismatch " + x.shape_string() + " vs " + y.shape_string());
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) out.data[i] += y.data[i];
  return g.push("add", std::move(out), {a, b}, [](Graph& gr, uint32_t self) {
    const Tensor& dy = gr.out_grad(self);
    for (Var in : gr.inputs(self)) {
      if (!gr.needs_grad(in)) continue;
      Tensor& dx = gr.grad_buffer(in);
      for (size_t i = 0; i < dy.size(); ++i) dx.data[i] += dy.data[i];
    }
  });
}

Var sub(Graph& g, Var a, Var b) { return add(g, a, scale(g, b, -1.0)); }

Var mul(Graph& g, Var a, Var b) {
  const Tensor &x = g.value(a), &y = g.value(b);
  require(x.same_shape(y), "mul", "shape mismatch " + x.shape_string() + " vs " + y.shape_string());
  Tensor out = x;
  for (size_t i = 0; i < out.size(); ++i) out.data[i] *= y.data[i];
  return g.push("mul", std::move(out), {a, b}, [](Graph& gr, uint32_t self) {
    Var a = gr.inputs(self)[0], b = gr.inputs(self)[1];
    const Tensor& dy = gr.out_grad(self);
    if (gr.needs_grad(a)) {
      Tensor& da = gr.grad_buffer(a);
      const Tensor& y = gr.value(b);
      for (size_t i = 0; i < dy.size(); ++i) da.data[i] += dy.data[i] * y.data[i];
    }
    if (gr.needs_grad(b)) {
      Tensor& db = gr.grad_buffer(b);
      const Tensor& x = gr.value(a);
      for (size_t i = 0; i < dy.size(); ++i) db.data[i] += dy.data[i] * x.data[i];
    }
  });
}

Var scale(Graph& g, Var a, double s) {
  return unary(g, "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Graph& g, Var a, double s) {
  return unary(g, "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var gelu(Graph& g, Var a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      g, "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
      [](double x, double) {
        double th = std::tanh(c * (x + k * x * x * x));
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * k * x * x);
      });
}

Var softplus(Graph& g, Var a) {
  return unary(
      g, "softplus", a, [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp(Graph& g, Var a) {
  return unary(g, "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Graph& g, Var a) {
  return unary(g, "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// --- linear algebra -----------------------------------------------------------------------

Var matmul(Graph& g, Var a, Var b) {
  const Tensor &x = g.value(a), &w = g.value(b);
  require(x.cols == w.rows, "matmul", "inner dims " + x.shape_string() + " vs " + w.shape_string());
  Tensor out(x.rows, w.cols);
  mmap(out).noalias() = cmap(x) * cmap(w);
  return g.push("matmul", std::move(out), {a, b}, [](Graph& gr, uint32_t self) {
    Var a = gr.inputs(self)[0], b = gr.inputs(self)[1];
    auto dy = cmap(gr.out_grad(self));
    if (gr.needs_grad(a)) mmap(gr.grad_buffer(a)).noalias() += dy * cmap(gr.value(b)).transpose();
    if (gr.needs_grad(b)) mmap(gr.grad_buffer(b)).noalias() += cmap(gr.value(a)).transpose() * dy;
  });
}

Var matmul_bt(Graph& g, Var a, Var b) {
  const Tensor &x = g.value(a), &w = g.value(b);
  require(x.cols == w.cols, "matmul_bt", "inner dims " + x.shape_string() + " vs " + w.shape_string());
  Tensor out(x.rows, w.rows);
  mmap(out).noalias() = cmap(x) * cmap(w).transpose();
  return g.push("matmul_bt", std::move(out), {a, b}, [](Graph& gr, uint32_t self) {
    Var a = gr.inputs(self)[0], b = gr.inputs(self)[1];
    auto dy = cmap(gr.out_grad(self));
    if (gr.needs_grad(a)) mmap(gr.grad_buffer(a)).noalias() += dy * cmap(gr.value(b));
    if (gr.needs_grad(b)) mmap(gr.grad_buffer(b)).noalias() += dy.transpose() * cmap(gr.value(a));
  });
}

Var linear(Graph& g, Var xv, Var wv, Var bv) {
  const Tensor &x = g.value(xv), &w = g.value(wv), &b = g.value(bv);
  require(x.cols == w.rows, "linear", "input " + x.shape_string() + " vs weight " + w.shape_string());
  require(b.rows == 1 && b.cols == w.cols, "linear", "bias must be [1 x " + std::to_string(w.cols) + "]");
  Tensor out(x.rows, w.cols);
  auto o = mmap(out);
  o.noalias() = cmap(x) * cmap(w);
  o.rowwise() += cmap(b).row(0);
  return g.push("linear", std::move(out), {xv, wv, bv}, [](Graph& gr, uint32_t self) {
    Var x = gr.inputs(self)[0], w = gr.inputs(self)[1], b = gr.inputs(self)[2];
    auto dy = cmap(gr.out_grad(self));
    if (gr.needs_grad(x)) mmap(gr.grad_buffer(x)).noalias() += dy * cmap(gr.value(w)).transpose();
    if (gr.needs_grad(w)) mmap(gr.grad_buffer(w)).noalias() += cmap(gr.value(x)).transpose() * dy;
    if (gr.needs_grad(b)) {
      // Plain loop: Eigen's vectorized column sum depends on buffer alignment.
      const Tensor& d = gr.out_grad(self);
      Tensor& gb = gr.grad_buffer(b);
      for (size_t r = 0; r < d.rows; ++r)
        for (size_t c = 0; c < d.cols; ++c) gb.data[c] += d.data[r * d.cols + c];
    }
  });
}

// --- normalization ------------------------------------------------------------------------

Var layer_norm(Graph& g, Var xv, Var gv, Var bv, double eps) {
  const Tensor &x = g.value(xv), &gamma = g.value(gv), &beta = g.value(bv);
  require(gamma.size() == x.cols && beta.size() == x.cols, "layer_norm", "gain/bias width mismatch");
  const size_t n = x.rows, d = x.cols;
  Tensor out(n, d);
  auto xhat = std::make_shared<Tensor>(n, d);
  auto rstd = std::make_shared<std::vector<double>>(n);
  for (size_t r = 0; r < n; ++r) {
    auto row = x.row(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (size_t c = 0; c < d; ++c) {
      double h = (row[c] - mu) * rs;
      xhat->at(r, c) = h;
      out.at(r, c) = h * gamma.data[c] + beta.data[c];
    }
  }
  return g.push("layer_norm", std::move(out), {xv, gv, bv}, [xhat, rstd](Graph& gr, uint32_t self) {
    Var x = gr.inputs(self)[0], gm = gr.inputs(self)[1], bt = gr.inputs(self)[2];
    const Tensor& dy = gr.out_grad(self);
    const Tensor& gamma = gr.value(gm);
    const size_t n = dy.rows, d = dy.cols;
    if (gr.needs_grad(gm)) {
      Tensor& dg = gr.grad_buffer(gm);
      for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < d; ++c) dg.data[c] += dy.at(r, c) * xhat->at(r, c);
    }
    if (gr.needs_grad(bt)) {
      Tensor& db = gr.grad_buffer(bt);
      for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < d; ++c) db.data[c] += dy.at(r, c);
    }
    if (gr.needs_grad(x)) {
      Tensor& dx = gr.grad_buffer(x);
      std::vector<double> dh(d);
      for (size_t r = 0; r < n; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (size_t c = 0; c < d; ++c) {
          dh[c] = dy.at(r, c) * gamma.data[c];
          mean_dh += dh[c];
          mean_dh_h += dh[c] * xhat->at(r, c);
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        for (size_t c = 0; c < d; ++c)
          dx.at(r, c) += (*rstd)[r] * (dh[c] - mean_dh - xhat->at(r, c) * mean_dh_h);
      }
    }
  });
}

Var softmax_rows(Graph& g, Var a) {
  const Tensor& x = g.value(a);
  Tensor out(x.rows, x.cols);
  for (size_t r = 0; r < x.rows; ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (size_t c = 0; c < x.cols; ++c) z += (o[c] = std::exp(in[c] - mx));
    for (double& v : o) v /= z;
  }
  return g.push("softmax", std::move(out), {a}, [](Graph& gr, uint32_t self) {
    Var in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const Tensor& y = gr.value(Var{self});
    const Tensor& dy = gr.out_grad(self);
    Tensor& dx = gr.grad_buffer(in);
    for (size_t r = 0; r < y.rows; ++r) {
      double dot = 0.0;
      for (size_t c = 0; c < y.cols; ++c) dot += dy.at(r, c) * y.at(r, c);
      for (size_t c = 0; c < y.cols; ++c) dx.at(r, c) += y.at(r, c) * (dy.at(r, c) - dot);
    }
  });
}

// --- indexing -----------------------------------------------------------------------------

Var embedding(Graph& g, Var table, std::span<const int32_t> ids) {
  const Tensor& t = g.value(table);
  Tensor out(ids.size(), t.cols);
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<size_t>(ids[i]) < t.rows, "embedding", "id out of range");
    auto src = t.row(static_cast<size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int32_t> saved(ids.begin(), ids.end());
  return g.push("embedding", std::move(out), {table}, [saved = std::move(saved)](Graph& gr, uint32_t self) {
    Var t = gr.inputs(self)[0];
    if (!gr.needs_grad(t)) return;
    const Tensor& dy = gr.out_grad(self);
    Tensor& dt = gr.grad_buffer(t);
    for (size_t i = 0; i < saved.size(); ++i) {
      auto src = dy.row(i);
      auto dst = dt.row(static_cast<size_t>(saved[i]));
      for (size_t c = 0; c < dy.cols; ++c) dst[c] += src[c];
    }
  });
}

Var gather_rows(Graph& g, Var a, std::span<const size_t> rows) {
  const Tensor& x = g.value(a);
  Tensor out(rows.size(), x.cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < x.rows, "gather_rows", "row out of range");
    auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<size_t> saved(rows.begin(), rows.end());
  return g.push("gather_rows", std::move(out), {a}, [saved = std::move(saved)](Graph& gr, uint32_t self) {
    Var in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const Tensor& dy = gr.out_grad(self);
    Tensor& dx = gr.grad_buffer(in);
    for (size_t i = 0; i < saved.size(); ++i) {
      auto src = dy.row(i);
      auto dst = dx.row(saved[i]);
      for (size_t c = 0; c < dy.cols; ++c) dst[c] += src[c];
    }
  });
}

Var slice_cols(Graph& g, Var a, size_t start, size_t count) {
  const Tensor& x = g.value(a);
  require(start + count <= x.cols, "slice_cols", "slice past the last column");
  Tensor out(x.rows, count);
  for (size_t r = 0; r < x.rows; ++r)
    for (size_t c = 0; c < count; ++c) out.at(r, c) = x.at(r, start + c);
  return g.push("slice_cols", std::move(out), {a}, [start](Graph& gr, uint32_t self) {
    Var in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const Tensor& dy = gr.out_grad(self);
    Tensor& dx = gr.grad_buffer(in);
    for (size_t r = 0; r < dy.rows; ++r)
      for (size_t c = 0; c < dy.cols; ++c) dx.at(r, start + c) += dy.at(r, c);
  });
}

Var sum(Graph& g, Var a) {
  const Tensor& x = g.value(a);
  double s = std::accumulate(x.data.begin(), x.data.end(), 0.0);
  return g.push("sum", Tensor::scalar(s), {a}, [](Graph& gr, uint32_t self) {
    Var in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    double d = gr.out_grad(self).data[0];
    for (double& v : gr.grad_buffer(in).data) v += d;
  });
}

Var dropout(Graph& g, Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  require(rate < 1.0, "dropout", "rate must be < 1");
  const Tensor& x = g.value(a);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  Tensor out(x.rows, x.cols);
  for (size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = keep(rng) ? s : 0.0;
    out.data[i] = x.data[i] * (*mask)[i];
  }
  return g.push("dropout", std::move(out), {a}, [mask](Graph& gr, uint32_t self) {
    Var in = gr.inputs(self)[0];
    if (!gr.needs_grad(in)) return;
    const Tensor& dy = gr.out_grad(self);
    Tensor& dx = gr.grad_buffer(in);
    for (size_t i = 0; i < dy.size(); ++i) dx.data[i] += dy.data[i] * (*mask)[i];
  });
}

// --- losses -------------------------------------------------------------------------------

Var cross_entropy_sum(Graph& g, Var logits, std::span<const int32_t> targets) {
  const Tensor& x = g.value(logits);
  require(targets.size() == x.rows, "cross_entropy", "one target per row required");
  auto probs = std::make_shared<Tensor>(x.rows, x.cols);
  double total = 0.0;
  for (size_t r = 0; r < x.rows; ++r) {
    if (targets[r] < 0) continue;
    require(static_cast<size_t>(targets[r]) < x.cols, "cross_entropy", "target class out of range");
    auto in = x.row(r);
    auto p = probs->row(r);
    double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (size_t c = 0; c < x.cols; ++c) z += (p[c] = std::exp(in[c] - mx));
    for (double& v : p) v /= z;
    total += mx + std::log(z) - in[static_cast<size_t>(targets[r])];
  }
  std::vector<int32_t> saved(targets.begin(), targets.end());
  return g.push("cross_entropy", Tensor::scalar(total), {logits},
                [probs, saved = std::move(saved)](Graph& gr, uint32_t self) {
                  Var in = gr.inputs(self)[0];
                  if (!gr.needs_grad(in)) return;
                  const double d = gr.out_grad(self).data[0];
                  Tensor& dx = gr.grad_buffer(in);
                  for (size_t r = 0; r < dx.rows; ++r) {
                    if (saved[r] < 0) continue;
                    auto p = probs->row(r);
                    auto o = dx.row(r);
                    for (size_t c = 0; c < dx.cols; ++c) o[c] += d * p[c];
                    o[static_cast<size_t>(saved[r])] -= d;
                  }
                });
}

Var gamma_log_pdf(Graph& g, Var alpha, Var beta, std::span<const double> t) {
  const Tensor &a = g.value(alpha), &b = g.value(beta);
  require(a.size() == t.size() && b.size() == t.size(), "gamma_log_pdf", "alpha, beta and t sizes differ");
  Tensor out(t.size(), 1);
  for (size_t i = 0; i < t.size(); ++i) out.data[i] = ehrgen::gamma_log_pdf(a.data[i], b.data[i], t[i]);
  std::vector<double> saved(t.begin(), t.end());
  return g.push("gamma_log_pdf", std::move(out), {alpha, beta}, [saved = std::move(saved)](Graph& gr, uint32_t self) {
    Var av = gr.inputs(self)[0], bv = gr.inputs(self)[1];
    const Tensor& dy = gr.out_grad(self);
    const Tensor &a = gr.value(av), &b = gr.value(bv);
    if (gr.needs_grad(av)) {
      Tensor& da = gr.grad_buffer(av);
      for (size_t i = 0; i < saved.size(); ++i)
        da.data[i] += dy.data[i] * (std::log(b.data[i]) - digamma(a.data[i]) + std::log(saved[i]));
    }
    if (gr.needs_grad(bv)) {
      Tensor& db = gr.grad_buffer(bv);
      for (size_t i = 0; i < saved.size(); ++i) db.data[i] += dy.data[i] * (a.data[i] / b.data[i] - saved[i]);
    }
  });
}

// --- attention ----------------------------------------------------------------------------

Var attention(Graph& g, Var qkv_var, const Segments& segments, size_t heads, bool causal) {
  const Tensor& qkv = g.value(qkv_var);
  require(qkv.cols % 3 == 0, "attention", "qkv width must be 3*d");
  const size_t d = qkv.cols / 3;
  require(heads > 0 && d % heads == 0, "attention", "model width not divisible by head count");
  require(segments.total() == qkv.rows, "attention", "segment lengths do not cover the input rows");
  const size_t hd = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  // Attention probabilities per (segment, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<RowMat>>();
  probs->reserve(segments.lengths.size() * heads);
  Tensor out(qkv.rows, d);
  const Eigen::Index ld = static_cast<Eigen::Index>(qkv.cols);
  size_t offset = 0;
  for (size_t len : segments.lengths) {
    const Eigen::Index L = static_cast<Eigen::Index>(len);
    for (size_t h = 0; h < heads; ++h) {
      using Strided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
      const double* base = qkv.data.data() + offset * qkv.cols + h * hd;
      Strided Q(base, L, static_cast<Eigen::Index>(hd), Eigen::OuterStride<>(ld));
      Strided K(base + d, L, static_cast<Eigen::Index>(hd), Eigen::OuterStride<>(ld));
      Strided V(base + 2 * d, L, static_cast<Eigen::Index>(hd), Eigen::OuterStride<>(ld));
      RowMat S = (Q * K.transpose()) * inv_sqrt;
      for (Eigen::Index i = 0; i < L; ++i) {
        const Eigen::Index last = causal ? i : L - 1;
        double mx = S.row(i).head(last + 1).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j <= last; ++j) z += (S(i, j) = std::exp(S(i, j) - mx));
        for (Eigen::Index j = 0; j <= last; ++j) S(i, j) /= z;
        for (Eigen::Index j = last + 1; j < L; ++j) S(i, j) = 0.0;
      }
      Eigen::Map<RowMat, 0, Eigen::OuterStride<>> O(out.data.data() + offset * d + h * hd, L,
                                                     static_cast<Eigen::Index>(hd),
                                                     Eigen::OuterStride<>(static_cast<Eigen::Index>(d)));
      O.noalias() = S * V;
      probs->push_back(std::move(S));
    }
    offset += len;
  }

  return g.push("attention", std::move(out), {qkv_var},
                [probs, lengths = segments.lengths, heads, d, hd, inv_sqrt](Graph& gr, uint32_t self) {
                  Var in = gr.inputs(self)[0];
                  if (!gr.needs_grad(in)) return;
                  const Tensor& qkv = gr.value(in);
                  const Tensor& dy = gr.out_grad(self);
                  Tensor& dqkv = gr.grad_buffer(in);
                  const Eigen::Index ld = static_cast<Eigen::Index>(qkv.cols);
                  const Eigen::Index hdi = static_cast<Eigen::Index>(hd);
                  using Strided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
                  using MutStrided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
                  size_t offset = 0, k = 0;
                  for (size_t len : lengths) {
                    const Eigen::Index L = static_cast<Eigen::Index>(len);
                    for (size_t h = 0; h < heads; ++h, ++k) {
                      const RowMat& P = (*probs)[k];
                      const double* base = qkv.data.data() + offset * qkv.cols + h * hd;
                      double* gbase = dqkv.data.data() + offset * qkv.cols + h * hd;
                      Strided Q(base, L, hdi, Eigen::OuterStride<>(ld));
                      Strided K(base + d, L, hdi, Eigen::OuterStride<>(ld));
                      Strided V(base + 2 * d, L, hdi, Eigen::OuterStride<>(ld));
                      Strided dO(dy.data.data() + offset * d + h * hd, L, hdi,
                                 Eigen::OuterStride<>(static_cast<Eigen::Index>(d)));
                      MutStrided dQ(gbase, L, hdi, Eigen::OuterStride<>(ld));
                      MutStrided dK(gbase + d, L, hdi, Eigen::OuterStride<>(ld));
                      MutStrided dV(gbase + 2 * d, L, hdi, Eigen::OuterStride<>(ld));
                      dV.noalias() += P.transpose() * dO;
                      RowMat dP = dO * V.transpose();
                      // Softmax backward; masked entries have P = 0 and stay 0.
                      Eigen::VectorXd rowdot = (dP.cwiseProduct(P)).rowwise().sum();
                      RowMat dS = P.cwiseProduct(dP.colwise() - rowdot) * inv_sqrt;
                      dQ.noalias() += dS * K;
                      dK.noalias() += dS.transpose() * Q;
                    }
                    offset += len;
                  }
                });
}

}  // namespace ehrgen::ad
