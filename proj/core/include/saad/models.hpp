#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saad/masking.hpp"
#include "saad/nn.hpp"
#include "saad/tensor.hpp"

namespace saad {

/// U-Net generator: input conv, `depth` stride-2 encoder stages that double
/// the width, residual dilated middle blocks at the bottleneck, and decoder
/// stages of nearest upsampling, skip concatenation and a 3x3 conv.
struct GeneratorConfig {
  int64_t image_channels = 3;
  bool mask_channel = true;  ///< append M as an extra input channel
  int64_t base_channels = 16;
  int64_t depth = 3;
  std::vector<int64_t> dilations{2, 4};
  int64_t image_size = 64;
  double leaky_alpha = 0.2;

  bool operator==(const GeneratorConfig&) const = default;
};

/// Segmentation discriminator: ResNet-style basic blocks, a 1x1 head after
/// each block, head maps upsampled to input size, concatenated and fused by
/// a 1x1 conv into one logit map.
struct SaadConfig {
  int64_t image_channels = 3;
  std::vector<int64_t> channels{16, 32, 64};
  std::vector<int64_t> strides{1, 2, 2};
  double leaky_alpha = 0.2;

  bool operator==(const SaadConfig&) const = default;
};

void validate(const GeneratorConfig& config);
void validate(const SaadConfig& config);

int64_t generator_input_channels(const GeneratorConfig& config);
/// Closed-form parameter count of the layer stack.
int64_t generator_param_count(const GeneratorConfig& config);
int64_t saad_param_count(const SaadConfig& config);

/// Receptive field (pixels) of each head's output unit.
std::vector<int64_t> saad_receptive_fields(const SaadConfig& config);

ParamStore init_generator(const GeneratorConfig& config, const InitSpec& spec);
ParamStore init_saad(const SaadConfig& config, const InitSpec& spec);

/// x_mask [N,C,H,W], mask [N,1,H,W] -> sigmoid output [N,C,H,W].
Tensor generator_forward(const GeneratorConfig& config, const ParamStore& params,
                         const Tensor& x_mask, const Mask& mask);

struct SaadOutput {
  Tensor logits;                 ///< [N,1,H,W], pre-sigmoid
  std::vector<Tensor> head_maps;  ///< per level, before upsampling
};

SaadOutput saad_forward(const SaadConfig& config, const ParamStore& params, const Tensor& x);

/// Keeps observed pixels of x_mask and takes x_tilde inside the holes:
/// x_mask * (1 - M) + x_tilde * M. With zero fill this equals
/// x_mask + x_tilde * M.
Tensor compose_output(const Tensor& x_mask, const Tensor& x_tilde, const Mask& mask);

/// Spatial mean of the logit map, one logit per image: [N].
Tensor global_score(const Tensor& logit_map);
/// Spatial mean of per-pixel probabilities: [N].
Tensor patch_mean_score(const Tensor& logit_map);

enum class DiscriminatorArm { saad, patch_mean, global };
std::string to_string(DiscriminatorArm arm);
DiscriminatorArm parse_arm(const std::string& s);

}  // namespace saad
