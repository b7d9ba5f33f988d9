#pragma once
#include <functional>
#include <string>
#include <vector>

#include "dsfpo/optimizer.hpp"
#include "dsfpo/tensor.hpp"

namespace dsfpo {

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass = true;
};

// Central-difference check of `analytic` (aligned with `params`) against the
// scalar function `loss`, which must read the parameters through the refs.
// Relative error uses max(|a|, |f|, 1e-6) in the denominator so that
// near-zero gradients are compared absolutely at the 1e-6 scale.
FdReport finite_diff_check(const std::function<double()>& loss,
                           const std::vector<ParamRef>& params,
                           const std::vector<Tensor>& analytic, double h, double tol);

}  // namespace dsfpo
