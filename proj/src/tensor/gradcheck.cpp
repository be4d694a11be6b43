#include "tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/errors.hpp"
#include "common/rng.hpp"

namespace ehrgen::ad {

namespace {

double evaluate(const LossBuilder& build) {
  Graph g;
  Var loss = build(g);
  double v = g.value(loss).item();
  if (!std::isfinite(v)) {
    auto bad = g.first_non_finite();
    std::string where = bad ? std::string(g.op_name(*bad)) + " (node " + std::to_string(bad->index) + ")" : "loss";
    throw RuntimeFailure("grad_check: non-finite value produced by " + where);
  }
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& build, std::span<Parameter* const> params, double eps,
                           size_t max_entries_per_param, uint64_t seed) {
  for (Parameter* p : params) p->grad = Tensor(p->value.rows, p->value.cols);
  {
    Graph g;
    Var loss = build(g);
    if (!std::isfinite(g.value(loss).item())) evaluate(build);
    g.backward(loss);
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  Rng rng = make_rng(seed, {0x67726164});
  for (size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    std::vector<size_t> idx(p.value.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    if (max_entries_per_param > 0 && idx.size() > max_entries_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_entries_per_param);
    }
    for (size_t i : idx) {
      const double orig = p.value.data[i];
      p.value.data[i] = orig + eps;
      const double up = evaluate(build);
      p.value.data[i] = orig - eps;
      const double down = evaluate(build);
      p.value.data[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[k].data[i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++result.checked;
      if (err > result.max_rel_error || result.checked == 1) {
        result.max_rel_error = err;
        result.worst_param = p.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace ehrgen::ad
