#pragma once

#include <string>
#include <vector>

#include "octevo/tensor.hpp"

namespace octevo {

struct LossWeights {
  double lambda = 100.0;  // L1 weight
  double mu = 10.0;       // latent-evolution regularizer weight
  double tau = 1.0;       // contrastive temperature
  void validate() const;  // throws ParameterError
};

struct LossBreakdown {
  double l1_p = 0, l1_r = 0;
  double gan_pair_p = 0, gan_pair_r = 0;
  double gan_qual_p = 0, gan_qual_r = 0;
  double erm = 0;
  double total = 0;
};

Tensor l1_loss(const Tensor& pred, const Tensor& target);

struct GanLosses {
  Tensor d_loss;  // -mean log D(real) - mean log(1 - D(fake))
  Tensor g_loss;  // -mean log D(fake)   (non-saturating)
};
GanLosses gan_pair_losses(const Tensor& d_real, const Tensor& d_fake);
GanLosses gan_quality_losses(const Tensor& d_real, const Tensor& d_fake);
// non-saturating generator term alone (no real-branch graph needed)
Tensor gan_generator_loss(const Tensor& d_fake);

// Contrastive regularizer in its algebraically reduced form:
// (Sim(z_pred, z_neg) - Sim(z_pred, z_pos)) / tau
Tensor erm_loss(const Tensor& z_pred, const Tensor& z_pos,
                const Tensor& z_neg, double tau);

// Conventional multi-negative variant (off by default in training):
// -log( e^{s+/tau} / (e^{s+/tau} + sum_i e^{s_i/tau}) )
Tensor erm_loss_multi(const Tensor& z_pred, const Tensor& z_pos,
                      const std::vector<Tensor>& negatives, double tau);

// Combines scalar components into the weighted total:
// gan terms + lambda*(l1_p + l1_r) + mu*erm. NaN components are rejected
// with the component named in the error.
LossBreakdown total_objective(const LossBreakdown& parts,
                              const LossWeights& w);

}  // namespace octevo
