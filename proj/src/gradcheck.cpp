#include "dsfpo/gradcheck.hpp"

#include <cmath>

#include "dsfpo/errors.hpp"

namespace dsfpo {

FdReport finite_diff_check(const std::function<double()>& loss,
                           const std::vector<ParamRef>& params,
                           const std::vector<Tensor>& analytic, double h, double tol) {
  if (analytic.size() != params.size())
    throw ShapeError("finite_diff_check: analytic gradient count != parameter count");
  FdReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p].value;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + h;
      const double fp = loss();
      w[i] = saved - h;
      const double fm = loss();
      w[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params[p].name;
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace dsfpo
