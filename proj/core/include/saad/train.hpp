#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "saad/losses.hpp"
#include "saad/masking.hpp"
#include "saad/metrics.hpp"
#include "saad/models.hpp"
#include "saad/nn.hpp"
#include "saad/ops.hpp"
#include "saad/rng.hpp"
#include "saad/text.hpp"

namespace saad {

struct TrainConfig {
  int64_t image_size = 64;
  int64_t channels = 3;
  int64_t batch_size = 8;
  int64_t steps = 1000;
  double lr_gen = 1e-4;
  double lr_disc = 4e-4;
  LossWeights loss;
  MaskSuiteParams masks;
  FillMode fill = FillMode::zero;
  DiscriminatorArm arm = DiscriminatorArm::saad;
  uint64_t seed = 0;
  int64_t checkpoint_interval = 0;  ///< 0 = final checkpoint only
  int64_t eval_interval = 0;        ///< 0 = no periodic evaluation
  GeneratorConfig gen;
  SaadConfig disc;
  /// Convolution GEMM precision during training; storage stays 64-bit.
  ops::ComputePrecision precision = ops::ComputePrecision::f64;
  /// Verify bitwise after every update that the other network is untouched.
  bool check_isolation = false;

  bool operator==(const TrainConfig&) const = default;
};

/// Copies the shared fields (size, channels) into the nested configs and
/// validates everything.
TrainConfig resolve(TrainConfig config);

/// Every field as a key, defaults included.
KeyValues to_key_values(const TrainConfig& config);
/// Starts from defaults and applies the given keys; unknown keys throw.
TrainConfig train_config_from(const KeyValues& kv);
/// Keys understood by train_config_from, in to_key_values order.
std::vector<std::string> train_config_keys();

struct TrainState {
  TrainConfig config;
  int64_t step = 0;
  ParamStore gen;
  ParamStore disc;
  AdamState gen_opt;
  AdamState disc_opt;
  Rng rng;
};

/// Fresh networks and optimizers; every seed is derived from config.seed.
TrainState make_train_state(const TrainConfig& config);

struct StepLosses {
  int64_t step = 0;
  double l_r = 0.0;
  double l_s_fake = 0.0;
  double l_s_real = 0.0;
  double r1 = 0.0;
  double l_adv = 0.0;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IsolationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One discriminator update followed by one generator update on `batch`
/// [N,C,H,W]. Masks are drawn from state.rng. Throws TrainingDivergedError
/// on a non-finite value.
StepLosses train_step(TrainState& state, const Tensor& batch);

/// Draws batch_size image indices (with replacement) from state.rng.
std::vector<int64_t> draw_batch_indices(TrainState& state, int64_t n_images);

inline constexpr const char* kTrainLogHeader = "step,L_r,L_s_fake,L_s_real,R1,L_adv";
std::string format_step_log(const StepLosses& s);

struct TrainOptions {
  std::string out_dir;  ///< checkpoints and divergence dumps; empty = none
  std::ostream* log = nullptr;
  std::function<void(const TrainState&, const StepLosses&)> on_step;
};

/// Runs state.step .. config.steps. Checkpoints land in
/// out_dir/checkpoint_<step>.bin and out_dir/checkpoint.bin.
std::vector<StepLosses> run_training(TrainState& state, const std::vector<Tensor>& images,
                                     const TrainOptions& options = {});

// Checkpoints: magic, version, config echo, step, both parameter stores,
// both Adam states, rng state, trailing CRC-32.
std::vector<uint8_t> serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(std::span<const uint8_t> bytes);
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);
/// Hex FNV-1a fingerprint of the serialized checkpoint.
std::string checkpoint_hash(const TrainState& state);
bool bitwise_equal(const TrainState& a, const TrainState& b);

/// Produces x_tilde for image `index` from its masked version.
using InpaintFn = std::function<Tensor(const Tensor& x_mask, const Mask& mask, int64_t index)>;

InpaintFn generator_inpainter(const GeneratorConfig& config, const ParamStore& params);
InpaintFn zero_inpainter();
/// Returns the ground truth; yields perfect reconstructions.
InpaintFn oracle_inpainter(const std::vector<Tensor>& images);

struct EvalOptions {
  std::string method = "saad";
  std::string checkpoint_id;
  FillMode fill = FillMode::zero;
  int64_t threads = 1;
};

struct EvalResult {
  std::vector<MetricsRecord> records;
  MetricsSummary summary;
};

/// PSNR/SSIM of compose_output(x_mask, inpaint(...)) against each image,
/// using suite mask i for image i. Row order is image order for any thread
/// count.
EvalResult evaluate(const std::vector<Tensor>& images, const MaskSuite& suite,
                    const InpaintFn& inpaint, const EvalOptions& options = {});

/// Hole-vs-observed AUC of the discriminator's per-pixel probabilities on
/// composited images from a frozen generator.
double segmentation_auc(const TrainState& state, const std::vector<Tensor>& images,
                        const MaskSuite& suite);

struct SweepOptions {
  std::vector<double> coverages{0.45, 0.65, 0.85};
  std::vector<DiscriminatorArm> arms{DiscriminatorArm::saad};
  int64_t eval_images = 0;  ///< 0 = all test images
  int64_t threads = 1;
  std::ostream* log = nullptr;
};

/// Trains a fresh model per (coverage, arm) with fixed-coverage stripe
/// masks and the same budget, then evaluates on a fixed suite per level.
std::vector<SweepRow> sweep_coverage(const TrainConfig& base, const std::vector<Tensor>& train,
                                     const std::vector<Tensor>& test, const SweepOptions& options);

/// Writes <out_dir>/<index>_input.png, _inpainted.png and _segmap.png
/// (sigmoid of the logit map) per image; returns the files written.
std::vector<std::string> dump_segmaps(const TrainState& state, const std::vector<Tensor>& images,
                                      const MaskSuite& suite, const std::string& out_dir);

/// Runs fn(i) for i in [0, n) on up to `threads` workers, each with its own
/// tape; results must be written by index.
void parallel_for(int64_t n, int64_t threads, const std::function<void(int64_t)>& fn);

}  // namespace saad
