#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "tensor/tensor.hpp"

namespace ehrgen::ad {

struct Var {
  uint32_t index = 0;
};

// Tape of op nodes in creation (= topological) order. One graph per forward pass;
// backward() walks the tape in reverse exactly once and accumulates into inputs.
class Graph {
 public:
  Var constant(Tensor value, std::string_view op = "constant");
  // Leaf bound to an external parameter; gradients accumulate into param.grad.
  Var param(Parameter& p);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() w.r.t. v (zeros if v did not receive any).
  const Tensor& grad(Var v);
  std::string_view op_name(Var v) const { return nodes_[v.index].op; }
  size_t size() const { return nodes_.size(); }

  void backward(Var loss);

  // First node (in forward order) holding a NaN or infinity, if any.
  std::optional<Var> first_non_finite() const;

  // Internal API used by op implementations.
  using BackwardFn = std::function<void(Graph&, uint32_t self)>;
  Var push(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);
  bool needs_grad(Var v) const { return nodes_[v.index].needs_grad; }
  Tensor& grad_buffer(Var v);  // allocated on first use
  const Tensor& out_grad(uint32_t self) const { return nodes_[self].grad; }
  const std::vector<Var>& inputs(uint32_t self) const { return nodes_[self].inputs; }

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  Tensor empty_;
};

// Token segments sharing a packed row: attention never crosses a segment boundary.
struct Segments {
  std::vector<size_t> lengths;
  size_t total() const;
};

// --- ops ---------------------------------------------------------------------------
Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);  // elementwise
Var scale(Graph& g, Var a, double s);
Var add_scalar(Graph& g, Var a, double s);
Var matmul(Graph& g, Var a, Var b);     // [n x k] [k x m]
Var matmul_bt(Graph& g, Var a, Var b);  // [n x k] [m x k]^T
Var linear(Graph& g, Var x, Var w, Var b);  // x w + b, b is [1 x out]
Var gelu(Graph& g, Var a);                  // tanh approximation
Var softplus(Graph& g, Var a);
Var exp(Graph& g, Var a);
Var log(Graph& g, Var a);
Var layer_norm(Graph& g, Var x, Var gamma, Var beta, double eps = 1e-5);  // row-wise
Var softmax_rows(Graph& g, Var a);
Var embedding(Graph& g, Var table, std::span<const int32_t> ids);
Var gather_rows(Graph& g, Var a, std::span<const size_t> rows);
Var slice_cols(Graph& g, Var a, size_t start, size_t count);
Var sum(Graph& g, Var a);
Var dropout(Graph& g, Var a, double rate, Rng& rng);
// Sum over rows of -log softmax(logits)[target]; rows with target < 0 are skipped.
Var cross_entropy_sum(Graph& g, Var logits, std::span<const int32_t> targets);
// Per-row shape-rate Gamma log density at t (alpha, beta: [n x 1], t: n values > 0).
Var gamma_log_pdf(Graph& g, Var alpha, Var beta, std::span<const double> t);
// Multi-head self-attention over packed segments. qkv is [n x 3d] holding Q|K|V.
Var attention(Graph& g, Var qkv, const Segments& segments, size_t heads, bool causal);

}  // namespace ehrgen::ad
