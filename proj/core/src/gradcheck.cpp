#include <cmath>
#include <string>

#include "octevo/errors.hpp"
#include "octevo/tensor.hpp"

namespace octevo {

GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double eps, double tol) {
  check_arg(!inputs.empty(), "grad_check: no inputs");
  // leaf copies with tracking on
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs)
    leaves.push_back(Tensor::from(t.shape(), t.values(), true));

  Tensor y = f(leaves);
  check_dim(y.numel() == 1, "grad_check: closure must return a scalar");
  y.backward();

  std::vector<std::vector<Real>> analytic;
  for (Tensor& l : leaves)
    analytic.push_back(l.has_grad() ? l.grad()
                                    : std::vector<Real>(l.numel(), 0));

  GradCheckReport rep;
  rep.pass = true;
  NoGradGuard ng;  // finite-difference evaluations record nothing
  for (size_t i = 0; i < leaves.size(); ++i) {
    std::vector<Tensor> probe;
    for (const Tensor& l : leaves)
      probe.push_back(Tensor::from(l.shape(), l.values()));
    const int64_t n = leaves[i].numel();
    for (int64_t j = 0; j < n; ++j) {
      const Real keep = probe[i].data()[j];
      probe[i].data()[j] = keep + Real(eps);
      const double fp = f(probe).item();
      probe[i].data()[j] = keep - Real(eps);
      const double fm = f(probe).item();
      probe[i].data()[j] = keep;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i][j];
      const double rel =
          std::fabs(a - numeric) /
          std::max(1.0, std::max(std::fabs(a), std::fabs(numeric)));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "input " + std::to_string(i) + " elem " +
                    std::to_string(j) + " analytic=" + std::to_string(a) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace octevo
