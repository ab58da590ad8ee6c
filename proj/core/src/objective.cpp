#include "octevo/objective.hpp"

#include <cmath>

#include "octevo/errors.hpp"

namespace octevo {

namespace {
constexpr Real kProbEps = Real(1e-7);
}

void LossWeights::validate() const {
  check_arg(lambda >= 0 && mu >= 0, "loss weights must be non-negative");
  check_arg(tau > 0, "temperature must be positive");
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  check_dim(pred.shape() == target.shape(), "l1_loss: shape mismatch");
  return mean(abs(sub(pred, target)));
}

namespace {

GanLosses log_gan_losses(const Tensor& d_real, const Tensor& d_fake) {
  Tensor pr = clamp(d_real, kProbEps, Real(1) - kProbEps);
  Tensor pf = clamp(d_fake, kProbEps, Real(1) - kProbEps);
  Tensor one_minus_pf = mul_scalar(add_scalar(pf, Real(-1)), Real(-1));
  GanLosses out;
  out.d_loss = mul_scalar(
      add(mean(log(pr)), mean(log(one_minus_pf))), Real(-1));
  out.g_loss = mul_scalar(mean(log(pf)), Real(-1));
  return out;
}

}  // namespace

GanLosses gan_pair_losses(const Tensor& d_real, const Tensor& d_fake) {
  return log_gan_losses(d_real, d_fake);
}

GanLosses gan_quality_losses(const Tensor& d_real, const Tensor& d_fake) {
  return log_gan_losses(d_real, d_fake);
}

Tensor gan_generator_loss(const Tensor& d_fake) {
  Tensor pf = clamp(d_fake, kProbEps, Real(1) - kProbEps);
  return mul_scalar(mean(log(pf)), Real(-1));
}

Tensor erm_loss(const Tensor& z_pred, const Tensor& z_pos,
                const Tensor& z_neg, double tau) {
  check_arg(tau > 0, "erm: temperature must be positive");
  Tensor diff = sub(cosine_similarity(z_pred, z_neg),
                    cosine_similarity(z_pred, z_pos));
  return mul_scalar(diff, Real(1.0 / tau));
}

Tensor erm_loss_multi(const Tensor& z_pred, const Tensor& z_pos,
                      const std::vector<Tensor>& negatives, double tau) {
  check_arg(tau > 0, "erm: temperature must be positive");
  check_arg(!negatives.empty(), "erm: need at least one negative");
  Tensor logits = mul_scalar(cosine_similarity(z_pred, z_pos),
                             Real(1.0 / tau));  // [1]
  for (const Tensor& n : negatives)
    logits = concat0(
        logits, mul_scalar(cosine_similarity(z_pred, n), Real(1.0 / tau)));
  Tensor probs = softmax(logits, 0);
  return mul_scalar(log(slice0(probs, 0, 1)), Real(-1));
}

LossBreakdown total_objective(const LossBreakdown& parts,
                              const LossWeights& w) {
  w.validate();
  const std::pair<const char*, double> named[] = {
      {"l1_p", parts.l1_p},           {"l1_r", parts.l1_r},
      {"gan_pair_p", parts.gan_pair_p}, {"gan_pair_r", parts.gan_pair_r},
      {"gan_qual_p", parts.gan_qual_p}, {"gan_qual_r", parts.gan_qual_r},
      {"erm", parts.erm}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v))
      throw TrainingError(std::string("non-finite loss component: ") + name);
  LossBreakdown out = parts;
  out.total = parts.gan_pair_p + parts.gan_pair_r + parts.gan_qual_p +
              parts.gan_qual_r + w.lambda * (parts.l1_p + parts.l1_r) +
              w.mu * parts.erm;
  return out;
}

}  // namespace octevo
