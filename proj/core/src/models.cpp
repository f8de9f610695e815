#include "saad/models.hpp"

#include <stdexcept>

#include "saad/ops.hpp"

namespace saad {

namespace {

std::string gen_name(const std::string& layer) { return "gen." + layer; }
std::string disc_name(const std::string& layer) { return "disc." + layer; }

// Width after encoder stage `i` (0 = input conv).
int64_t stage_width(const GeneratorConfig& c, int64_t i) { return c.base_channels << i; }

bool needs_projection(const SaadConfig& c, size_t i) {
  const int64_t cin = i == 0 ? c.image_channels : c.channels[i - 1];
  return cin != c.channels[i] || c.strides[i] != 1;
}

}  // namespace

void validate(const GeneratorConfig& c) {
  if (c.image_channels < 1) throw std::invalid_argument("generator: image_channels must be >= 1");
  if (c.base_channels < 1) throw std::invalid_argument("generator: base_channels must be >= 1");
  if (c.depth < 1) throw std::invalid_argument("generator: depth must be >= 1");
  if (c.image_size < 1 || c.image_size % (int64_t{1} << c.depth) != 0) {
    throw DimensionError("generator: image size " + std::to_string(c.image_size) +
                         " is not divisible by 2^" + std::to_string(c.depth));
  }
  for (int64_t d : c.dilations) {
    if (d < 1) throw std::invalid_argument("generator: dilations must be positive");
  }
  if (!(c.leaky_alpha > 0.0 && c.leaky_alpha < 1.0)) {
    throw std::invalid_argument("generator: leaky_alpha must lie in (0,1)");
  }
}

void validate(const SaadConfig& c) {
  if (c.channels.empty() || c.channels.size() != c.strides.size()) {
    throw std::invalid_argument("saad: channels and strides must be non-empty and equal length");
  }
  for (size_t i = 0; i < c.channels.size(); ++i) {
    if (c.channels[i] < 1 || c.strides[i] < 1) {
      throw std::invalid_argument("saad: channels and strides must be positive");
    }
  }
  if (!(c.leaky_alpha > 0.0 && c.leaky_alpha < 1.0)) {
    throw std::invalid_argument("saad: leaky_alpha must lie in (0,1)");
  }
}

int64_t generator_input_channels(const GeneratorConfig& c) {
  return c.image_channels + (c.mask_channel ? 1 : 0);
}

int64_t generator_param_count(const GeneratorConfig& c) {
  validate(c);
  int64_t total = conv_param_count(generator_input_channels(c), stage_width(c, 0), 3);
  for (int64_t i = 1; i <= c.depth; ++i) {
    total += conv_param_count(stage_width(c, i - 1), stage_width(c, i), 3);
  }
  const int64_t bottleneck = stage_width(c, c.depth);
  total += static_cast<int64_t>(c.dilations.size()) * conv_param_count(bottleneck, bottleneck, 3);
  for (int64_t i = c.depth; i >= 1; --i) {
    total += conv_param_count(stage_width(c, i) + stage_width(c, i - 1), stage_width(c, i - 1), 3);
  }
  total += conv_param_count(stage_width(c, 0), c.image_channels, 3);
  return total;
}

int64_t saad_param_count(const SaadConfig& c) {
  validate(c);
  int64_t total = 0;
  for (size_t i = 0; i < c.channels.size(); ++i) {
    const int64_t cin = i == 0 ? c.image_channels : c.channels[i - 1];
    total += conv_param_count(cin, c.channels[i], 3) + conv_param_count(c.channels[i], c.channels[i], 3);
    if (needs_projection(c, i)) total += conv_param_count(cin, c.channels[i], 1);
    total += conv_param_count(c.channels[i], 1, 1);
  }
  total += conv_param_count(static_cast<int64_t>(c.channels.size()), 1, 1);
  return total;
}

std::vector<int64_t> saad_receptive_fields(const SaadConfig& c) {
  validate(c);
  std::vector<int64_t> out;
  int64_t rf = 1, jump = 1;
  for (size_t i = 0; i < c.channels.size(); ++i) {
    rf += 2 * jump;  // first 3x3, stride applied after
    jump *= c.strides[i];
    rf += 2 * jump;  // second 3x3
    out.push_back(rf);
  }
  return out;
}

ParamStore init_generator(const GeneratorConfig& c, const InitSpec& spec) {
  validate(c);
  Rng rng(spec.seed);
  ParamStore p;
  add_conv_params(p, gen_name("in"), generator_input_channels(c), stage_width(c, 0), 3, rng);
  for (int64_t i = 1; i <= c.depth; ++i) {
    add_conv_params(p, gen_name("enc" + std::to_string(i)), stage_width(c, i - 1),
                    stage_width(c, i), 3, rng);
  }
  const int64_t bottleneck = stage_width(c, c.depth);
  for (size_t j = 0; j < c.dilations.size(); ++j) {
    add_conv_params(p, gen_name("mid" + std::to_string(j + 1)), bottleneck, bottleneck, 3, rng);
  }
  for (int64_t i = c.depth; i >= 1; --i) {
    add_conv_params(p, gen_name("dec" + std::to_string(i)), stage_width(c, i) + stage_width(c, i - 1),
                    stage_width(c, i - 1), 3, rng);
  }
  add_conv_params(p, gen_name("out"), stage_width(c, 0), c.image_channels, 3, rng);
  return p;
}

ParamStore init_saad(const SaadConfig& c, const InitSpec& spec) {
  validate(c);
  Rng rng(spec.seed);
  ParamStore p;
  for (size_t i = 0; i < c.channels.size(); ++i) {
    const std::string block = "block" + std::to_string(i + 1);
    const int64_t cin = i == 0 ? c.image_channels : c.channels[i - 1];
    add_conv_params(p, disc_name(block + ".conv1"), cin, c.channels[i], 3, rng);
    add_conv_params(p, disc_name(block + ".conv2"), c.channels[i], c.channels[i], 3, rng);
    if (needs_projection(c, i)) add_conv_params(p, disc_name(block + ".proj"), cin, c.channels[i], 1, rng);
    add_conv_params(p, disc_name("head" + std::to_string(i + 1)), c.channels[i], 1, 1, rng);
  }
  add_conv_params(p, disc_name("agg"), static_cast<int64_t>(c.channels.size()), 1, 1, rng);
  return p;
}

Tensor generator_forward(const GeneratorConfig& c, const ParamStore& params, const Tensor& x_mask,
                         const Mask& mask) {
  validate(c);
  if (x_mask.rank() != 4 || x_mask.dim(1) != c.image_channels) {
    throw ShapeError("generator: expected [N," + std::to_string(c.image_channels) + ",H,W], got " +
                     shape_to_string(x_mask.shape()));
  }
  const int64_t h = x_mask.dim(2), w = x_mask.dim(3);
  const int64_t unit = int64_t{1} << c.depth;
  if (h % unit != 0 || w % unit != 0) {
    throw DimensionError("generator: input " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not divisible by 2^" + std::to_string(c.depth));
  }
  if (mask.batch() != x_mask.dim(0) || mask.height() != h || mask.width() != w) {
    throw ShapeError("generator: mask does not match input");
  }
  auto act = [&](const Tensor& t) { return ops::leaky_relu(t, c.leaky_alpha); };
  const ops::Conv2dParams same{1, 1, 1};
  const ops::Conv2dParams down{2, 1, 1};

  Tensor input = c.mask_channel ? ops::concat_channels({x_mask, mask.tensor()}) : x_mask;
  std::vector<Tensor> skips;
  Tensor hcur = act(apply_conv(params, gen_name("in"), input, same));
  skips.push_back(hcur);
  for (int64_t i = 1; i <= c.depth; ++i) {
    hcur = act(apply_conv(params, gen_name("enc" + std::to_string(i)), hcur, down));
    if (i < c.depth) skips.push_back(hcur);
  }
  for (size_t j = 0; j < c.dilations.size(); ++j) {
    const int64_t d = c.dilations[j];
    hcur = hcur + act(apply_conv(params, gen_name("mid" + std::to_string(j + 1)), hcur, {1, d, d}));
  }
  for (int64_t i = c.depth; i >= 1; --i) {
    Tensor up = ops::upsample_nearest(hcur, 2);
    up = ops::concat_channels({up, skips[static_cast<size_t>(i - 1)]});
    hcur = act(apply_conv(params, gen_name("dec" + std::to_string(i)), up, same));
  }
  return ops::sigmoid(apply_conv(params, gen_name("out"), hcur, same));
}

SaadOutput saad_forward(const SaadConfig& c, const ParamStore& params, const Tensor& x) {
  validate(c);
  if (x.rank() != 4 || x.dim(1) != c.image_channels) {
    throw ShapeError("saad: expected [N," + std::to_string(c.image_channels) + ",H,W], got " +
                     shape_to_string(x.shape()));
  }
  int64_t total_stride = 1;
  for (int64_t s : c.strides) total_stride *= s;
  if (x.dim(2) % total_stride != 0 || x.dim(3) % total_stride != 0) {
    throw DimensionError("saad: input size must be divisible by " + std::to_string(total_stride));
  }
  auto act = [&](const Tensor& t) { return ops::leaky_relu(t, c.leaky_alpha); };

  SaadOutput out;
  std::vector<Tensor> upsampled;
  Tensor hcur = x;
  int64_t scale = 1;
  for (size_t i = 0; i < c.channels.size(); ++i) {
    const std::string block = "block" + std::to_string(i + 1);
    const int64_t s = c.strides[i];
    Tensor a = act(apply_conv(params, disc_name(block + ".conv1"), hcur, {s, 1, 1}));
    Tensor b = apply_conv(params, disc_name(block + ".conv2"), a, {1, 1, 1});
    Tensor shortcut =
        needs_projection(c, i) ? apply_conv(params, disc_name(block + ".proj"), hcur, {s, 0, 1}) : hcur;
    hcur = act(b + shortcut);
    scale *= s;
    Tensor head = apply_conv(params, disc_name("head" + std::to_string(i + 1)), hcur, {1, 0, 1});
    out.head_maps.push_back(head);
    upsampled.push_back(scale == 1 ? head : ops::upsample_nearest(head, scale));
  }
  out.logits = apply_conv(params, disc_name("agg"), ops::concat_channels(upsampled), {1, 0, 1});
  return out;
}

Tensor compose_output(const Tensor& x_mask, const Tensor& x_tilde, const Mask& mask) {
  if (x_mask.shape() != x_tilde.shape()) {
    throw ShapeError("compose_output: " + shape_to_string(x_mask.shape()) + " vs " +
                     shape_to_string(x_tilde.shape()));
  }
  if (x_mask.rank() != 4 || mask.batch() != x_mask.dim(0) || mask.height() != x_mask.dim(2) ||
      mask.width() != x_mask.dim(3)) {
    throw ShapeError("compose_output: mask does not match image");
  }
  const Tensor m = ops::repeat_channels(mask.tensor(), x_mask.dim(1));
  return x_mask * (1.0 - m) + x_tilde * m;
}

Tensor global_score(const Tensor& logit_map) { return ops::mean_per_sample(logit_map); }

Tensor patch_mean_score(const Tensor& logit_map) {
  return ops::mean_per_sample(ops::sigmoid(logit_map));
}

std::string to_string(DiscriminatorArm arm) {
  switch (arm) {
    case DiscriminatorArm::saad:
      return "saad";
    case DiscriminatorArm::patch_mean:
      return "patch_mean";
    case DiscriminatorArm::global:
      return "global";
  }
  return "unknown";
}

DiscriminatorArm parse_arm(const std::string& s) {
  if (s == "saad") return DiscriminatorArm::saad;
  if (s == "patch_mean") return DiscriminatorArm::patch_mean;
  if (s == "global") return DiscriminatorArm::global;
  throw std::invalid_argument("unknown discriminator arm: " + s);
}

}  // namespace saad
