#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "tensor/graph.hpp"

namespace ehrgen::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  size_t worst_index = 0;
  size_t checked = 0;
};

// Builds the scalar loss on a fresh graph, binding the parameters with g.param().
using LossBuilder = std::function<Var(Graph&)>;

// Max over checked entries of |analytic - central difference| / max(1, |analytic|).
// max_entries_per_param = 0 checks every entry; otherwise a seeded random subset.
// A non-finite loss throws RuntimeFailure naming the first offending op.
GradCheckResult grad_check(const LossBuilder& build, std::span<Parameter* const> params, double eps = 1e-5,
                           size_t max_entries_per_param = 0, uint64_t seed = 0);

}  // namespace ehrgen::ad
