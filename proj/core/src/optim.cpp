#include "octevo/optim.hpp"

#include <cmath>

#include "octevo/errors.hpp"

namespace octevo {

void adam_step(const std::vector<std::pair<std::string, Tensor*>>& params,
               AdamState& state, double lr, double weight_decay) {
  check_arg(lr > 0, "adam: learning rate must be positive");
  check_arg(weight_decay >= 0, "adam: weight decay must be non-negative");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  const double shrink = 1.0 - lr * weight_decay;
  for (const auto& [name, p] : params) {
    if (!p->has_grad()) continue;
    const std::vector<Real>& g = p->grad();
    auto& [m, v] = state.moments[name];
    if (m.empty() && !g.empty()) {
      m.assign(g.size(), 0);
      v.assign(g.size(), 0);
    }
    check_dim(m.size() == g.size(), "adam: moment size mismatch for " + name);
    Real* w = p->data();
    for (size_t i = 0; i < g.size(); ++i) {
      const double gi = double(g[i]);
      if (!std::isfinite(gi))
        throw TrainingError("non-finite gradient in " + name);
      const double mi = state.beta1 * double(m[i]) + (1.0 - state.beta1) * gi;
      const double vi =
          state.beta2 * double(v[i]) + (1.0 - state.beta2) * gi * gi;
      m[i] = Real(mi);
      v[i] = Real(vi);
      const double update = (mi / c1) / (std::sqrt(vi / c2) + state.eps);
      w[i] = Real(double(w[i]) * shrink - lr * update);
    }
  }
}

}  // namespace octevo
