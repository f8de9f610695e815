#include "saad/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace saad {

namespace {

// Image-level BCE for the two ablation arms; label 1 = fake.
Tensor image_level_bce(DiscriminatorArm arm, const Tensor& logit_map, double label) {
  const int64_t n = logit_map.dim(0);
  const Tensor target = Tensor::full({n}, label);
  if (arm == DiscriminatorArm::global) {
    return ops::mean(ops::bce_with_logits(global_score(logit_map), target));
  }
  return ops::mean(ops::bce_prob(patch_mean_score(logit_map), target));
}

Tensor arm_loss(DiscriminatorArm arm, const Tensor& logit_map, const Mask& target) {
  if (arm == DiscriminatorArm::saad) return seg_bce(logit_map, target);
  return image_level_bce(arm, logit_map, target.hole_count() > 0 ? 1.0 : 0.0);
}

// (gamma/2) * |d sum_n mean(logits_n) / dx|^2 / N; x must require grad.
Tensor penalty_on(const Tensor& logits, const Tensor& x, double gamma) {
  const Tensor score = ops::sum(ops::mean_per_sample(logits));
  const Tensor g = grad(score, std::span<const Tensor>(&x, 1), /*create_graph=*/true)[0];
  return ops::sum(ops::square(g)) * (0.5 * gamma / static_cast<double>(x.dim(0)));
}

}  // namespace

void validate(const LossWeights& w) {
  if (!(w.lambda_r > 0.0)) throw std::invalid_argument("lambda_r must be > 0");
  if (!(w.lambda_adv >= 0.0)) throw std::invalid_argument("lambda_adv must be >= 0");
  if (!(w.gamma_r1 >= 0.0)) throw std::invalid_argument("gamma_r1 must be >= 0");
}

Tensor masked_mse(const Tensor& x, const Tensor& x_final, const Mask& mask,
                  ops::MaskedReduceInfo* info) {
  if (x.shape() != x_final.shape()) {
    throw ShapeError("masked_mse: " + shape_to_string(x.shape()) + " vs " +
                     shape_to_string(x_final.shape()));
  }
  return ops::masked_mean(ops::square(x - x_final), mask.tensor(), info);
}

Tensor seg_bce(const Tensor& logit_map, const Mask& mask) {
  if (logit_map.shape() != mask.tensor().shape()) {
    throw ShapeError("seg_bce: logits " + shape_to_string(logit_map.shape()) + " vs mask " +
                     shape_to_string(mask.tensor().shape()));
  }
  return ops::mean(ops::bce_with_logits(logit_map, mask.tensor()));
}

Tensor r1_penalty(const DiscriminatorFn& d, const Tensor& x_real, double gamma) {
  if (gamma == 0.0) return Tensor::scalar(0.0);
  GradModeGuard on(true);
  Tensor x = x_real.detach();
  x.set_requires_grad(true);
  return penalty_on(d(x), x, gamma);
}

DiscriminatorLoss discriminator_loss(const DiscriminatorFn& d, DiscriminatorArm arm,
                                     const Tensor& x_real, const Tensor& x_final,
                                     const Mask& mask, const LossWeights& w) {
  validate(w);
  DiscriminatorLoss out;
  const Tensor fake_term = arm_loss(arm, d(x_final.detach()), mask);
  const Mask real_mask = Mask::zeros(x_real.dim(0), x_real.dim(2), x_real.dim(3));

  Tensor real_term, penalty;
  if (w.gamma_r1 > 0.0) {
    // One real forward serves both the real-side loss and the penalty.
    GradModeGuard on(true);
    Tensor x = x_real.detach();
    x.set_requires_grad(true);
    const Tensor logits = d(x);
    real_term = arm_loss(arm, logits, real_mask);
    penalty = penalty_on(logits, x, w.gamma_r1);
  } else {
    real_term = arm_loss(arm, d(x_real.detach()), real_mask);
    penalty = Tensor::scalar(0.0);
  }
  out.total = fake_term + real_term + penalty;
  out.seg_fake = fake_term.item();
  out.seg_real = real_term.item();
  out.r1 = penalty.item();
  return out;
}

GeneratorLoss generator_loss(const DiscriminatorFn& d, DiscriminatorArm arm, const Tensor& x,
                             const Tensor& x_final, const Mask& mask, const LossWeights& w) {
  validate(w);
  GeneratorLoss out;
  ops::MaskedReduceInfo info;
  const Tensor rec = masked_mse(x, x_final, mask, &info);
  out.degenerate_mask = info.degenerate;
  Tensor total = rec * w.lambda_r;
  Tensor adv = Tensor::scalar(0.0);
  if (w.lambda_adv > 0.0) {
    const Tensor logits = d(x_final);
    const Mask all_real = Mask::zeros(x_final.dim(0), x_final.dim(2), x_final.dim(3));
    if (arm != DiscriminatorArm::saad) {
      adv = image_level_bce(arm, logits, 0.0);
    } else if (w.adv_masked_only) {
      adv = ops::masked_mean(ops::bce_with_logits(logits, all_real.tensor()), mask.tensor());
    } else {
      adv = seg_bce(logits, all_real);
    }
    total = total + adv * w.lambda_adv;
  }
  out.total = total;
  out.reconstruction = rec.item();
  out.adversarial = adv.item();
  return out;
}

}  // namespace saad
