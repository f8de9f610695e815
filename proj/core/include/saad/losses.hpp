#pragma once

#include <functional>

#include "saad/masking.hpp"
#include "saad/models.hpp"
#include "saad/ops.hpp"
#include "saad/tensor.hpp"

namespace saad {

struct LossWeights {
  double lambda_r = 1.0;
  double lambda_adv = 0.1;
  double gamma_r1 = 10.0;
  /// Restrict the generator's adversarial term to hole pixels.
  bool adv_masked_only = false;

  bool operator==(const LossWeights&) const = default;
};

void validate(const LossWeights& w);

/// Mean squared error over hole pixels (all channels); 0 for an empty mask,
/// which is reported through `info`.
Tensor masked_mse(const Tensor& x, const Tensor& x_final, const Mask& mask,
                  ops::MaskedReduceInfo* info = nullptr);

/// Pixel-wise BCE between sigmoid(logits) and the mask, averaged over all
/// pixels, in the stable logit form.
Tensor seg_bce(const Tensor& logit_map, const Mask& mask);

/// Maps an image batch to a discriminator output. For the network this is
/// the [N,1,H,W] logit map; tests substitute closed-form surrogates.
using DiscriminatorFn = std::function<Tensor(const Tensor&)>;

/// Zero-centred penalty on real data: (gamma/2) * mean over the batch of
/// |d mean-logit(D(x_real)) / d x_real|^2. The result stays differentiable
/// with respect to D's parameters.
Tensor r1_penalty(const DiscriminatorFn& d, const Tensor& x_real, double gamma);

struct DiscriminatorLoss {
  Tensor total;
  double seg_fake = 0.0;
  double seg_real = 0.0;
  double r1 = 0.0;
};

/// Fake-side term + real-side term + R1. The fake input is detached. For
/// the saad arm both terms are seg_bce against M and the empty mask; the
/// global and patch_mean arms classify a whole image (fake = 1, real = 0)
/// from the mean logit or the mean probability.
DiscriminatorLoss discriminator_loss(const DiscriminatorFn& d, DiscriminatorArm arm,
                                     const Tensor& x_real, const Tensor& x_final,
                                     const Mask& mask, const LossWeights& w);

struct GeneratorLoss {
  Tensor total;
  double reconstruction = 0.0;
  double adversarial = 0.0;
  bool degenerate_mask = false;
};

/// lambda_r * masked_mse + lambda_adv * (adversarial term pushing D to call
/// every pixel real). D's parameters should be frozen by the caller.
GeneratorLoss generator_loss(const DiscriminatorFn& d, DiscriminatorArm arm, const Tensor& x,
                             const Tensor& x_final, const Mask& mask, const LossWeights& w);

}  // namespace saad
