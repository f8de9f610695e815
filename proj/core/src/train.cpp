#include "saad/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <thread>

#include "saad/binary_io.hpp"
#include "saad/dataset.hpp"
#include "saad/image_io.hpp"

namespace saad {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kCheckpointMagic = "SAADCKPT";
constexpr uint32_t kCheckpointVersion = 1;

std::string join_ints(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int64_t> parse_ints(const std::string& s) {
  std::vector<int64_t> out;
  for (const auto& part : split(s, ',')) {
    if (!trim(part).empty()) out.push_back(parse_int(part));
  }
  return out;
}

FillMode parse_fill(const std::string& s) {
  if (s == "zero") return FillMode::zero;
  if (s == "observed_mean") return FillMode::observed_mean;
  throw std::invalid_argument("unknown fill mode: " + s);
}

std::string fill_name(FillMode f) { return f == FillMode::zero ? "zero" : "observed_mean"; }

ops::ComputePrecision parse_precision(const std::string& s) {
  if (s == "f64") return ops::ComputePrecision::f64;
  if (s == "f32") return ops::ComputePrecision::f32;
  throw std::invalid_argument("unknown precision: " + s);
}

std::string precision_name(ops::ComputePrecision p) {
  return p == ops::ComputePrecision::f64 ? "f64" : "f32";
}

void write_store(ByteWriter& out, const ParamStore& store) {
  out.u64(store.size());
  for (const auto& [name, t] : store) {
    out.str(name);
    out.u32(static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) out.i64(d);
    for (double v : t.data()) out.f64(v);
  }
}

ParamStore read_store(ByteReader& in, bool requires_grad) {
  ParamStore store;
  const uint64_t count = in.u64();
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = in.str();
    const uint32_t rank = in.u32();
    if (rank > 8) throw FormatError("checkpoint: implausible tensor rank");
    Shape shape;
    for (uint32_t k = 0; k < rank; ++k) {
      const int64_t d = in.i64();
      if (d < 0 || d > (int64_t{1} << 32)) throw FormatError("checkpoint: implausible dimension");
      shape.push_back(d);
    }
    const int64_t n = shape_numel(shape);
    if (static_cast<uint64_t>(n) * 8 > in.remaining()) throw FormatError("checkpoint: truncated tensor");
    std::vector<double> data(static_cast<size_t>(n));
    for (auto& v : data) v = in.f64();
    store.add(name, Tensor::from_data(shape, std::move(data))).set_requires_grad(requires_grad);
  }
  return store;
}

void write_adam(ByteWriter& out, const AdamState& s) {
  out.i64(s.step);
  out.f64(s.beta1);
  out.f64(s.beta2);
  out.f64(s.eps);
  write_store(out, s.first_moment);
  write_store(out, s.second_moment);
}

AdamState read_adam(ByteReader& in) {
  AdamState s;
  s.step = in.i64();
  s.beta1 = in.f64();
  s.beta2 = in.f64();
  s.eps = in.f64();
  s.first_moment = read_store(in, false);
  s.second_moment = read_store(in, false);
  return s;
}

// Names and shapes must match a fresh store built from the config.
void check_layout(const ParamStore& expected, const ParamStore& actual, const std::string& what) {
  if (expected.size() != actual.size()) {
    throw FormatError("checkpoint: " + what + " has " + std::to_string(actual.size()) +
                      " tensors, config implies " + std::to_string(expected.size()));
  }
  auto a = actual.begin();
  for (const auto& [name, t] : expected) {
    if (a->first != name || a->second.shape() != t.shape()) {
      throw FormatError("checkpoint: " + what + " entry '" + a->first + "' does not match config");
    }
    ++a;
  }
}

std::string step_name(int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(step));
  return buf;
}

}  // namespace

TrainConfig resolve(TrainConfig c) {
  if (c.image_size < 8) throw std::invalid_argument("image_size must be >= 8");
  if (c.channels != 1 && c.channels != 3) throw std::invalid_argument("channels must be 1 or 3");
  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (c.steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (!(c.lr_gen > 0.0) || !(c.lr_disc > 0.0)) throw std::invalid_argument("learning rates must be > 0");
  if (c.checkpoint_interval < 0 || c.eval_interval < 0) {
    throw std::invalid_argument("intervals must be >= 0");
  }
  c.gen.image_size = c.image_size;
  c.gen.image_channels = c.channels;
  c.disc.image_channels = c.channels;
  c.masks.height = c.image_size;
  c.masks.width = c.image_size;
  validate(c.gen);
  validate(c.disc);
  validate(c.loss);
  return c;
}

KeyValues to_key_values(const TrainConfig& c) {
  KeyValues kv;
  kv.set("image_size", std::to_string(c.image_size));
  kv.set("channels", std::to_string(c.channels));
  kv.set("batch_size", std::to_string(c.batch_size));
  kv.set("steps", std::to_string(c.steps));
  kv.set("lr_gen", format_double(c.lr_gen));
  kv.set("lr_disc", format_double(c.lr_disc));
  kv.set("lambda_r", format_double(c.loss.lambda_r));
  kv.set("lambda_adv", format_double(c.loss.lambda_adv));
  kv.set("gamma_r1", format_double(c.loss.gamma_r1));
  kv.set("adv_masked_only", c.loss.adv_masked_only ? "true" : "false");
  kv.set("mask_kind", to_string(c.masks.kind));
  kv.set("rect_min_hole", format_double(c.masks.rect.min_hole_fraction));
  kv.set("rect_max_hole", format_double(c.masks.rect.max_hole_fraction));
  kv.set("rect_max_count", std::to_string(c.masks.rect.max_rects));
  kv.set("rect_min_side", format_double(c.masks.rect.min_side_fraction));
  kv.set("rect_max_side", format_double(c.masks.rect.max_side_fraction));
  kv.set("n_stripes", std::to_string(c.masks.n_stripes));
  kv.set("stripe_width", std::to_string(c.masks.stripe_width));
  kv.set("coverage", format_double(c.masks.coverage));
  kv.set("fill", fill_name(c.fill));
  kv.set("arm", to_string(c.arm));
  kv.set("seed", std::to_string(c.seed));
  kv.set("checkpoint_interval", std::to_string(c.checkpoint_interval));
  kv.set("eval_interval", std::to_string(c.eval_interval));
  kv.set("gen_base_channels", std::to_string(c.gen.base_channels));
  kv.set("gen_depth", std::to_string(c.gen.depth));
  kv.set("gen_dilations", join_ints(c.gen.dilations));
  kv.set("gen_mask_channel", c.gen.mask_channel ? "true" : "false");
  kv.set("gen_leaky_alpha", format_double(c.gen.leaky_alpha));
  kv.set("disc_channels", join_ints(c.disc.channels));
  kv.set("disc_strides", join_ints(c.disc.strides));
  kv.set("disc_leaky_alpha", format_double(c.disc.leaky_alpha));
  kv.set("precision", precision_name(c.precision));
  kv.set("check_isolation", c.check_isolation ? "true" : "false");
  return kv;
}

std::vector<std::string> train_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : to_key_values(TrainConfig{}).entries) keys.push_back(k);
  return keys;
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig c;
  for (const auto& [key, value] : kv.entries) {
    try {
      if (key == "image_size") c.image_size = parse_int(value);
      else if (key == "channels") c.channels = parse_int(value);
      else if (key == "batch_size") c.batch_size = parse_int(value);
      else if (key == "steps") c.steps = parse_int(value);
      else if (key == "lr_gen") c.lr_gen = parse_double(value);
      else if (key == "lr_disc") c.lr_disc = parse_double(value);
      else if (key == "lambda_r") c.loss.lambda_r = parse_double(value);
      else if (key == "lambda_adv") c.loss.lambda_adv = parse_double(value);
      else if (key == "gamma_r1") c.loss.gamma_r1 = parse_double(value);
      else if (key == "adv_masked_only") c.loss.adv_masked_only = parse_bool(value);
      else if (key == "mask_kind") c.masks.kind = parse_mask_kind(value);
      else if (key == "rect_min_hole") c.masks.rect.min_hole_fraction = parse_double(value);
      else if (key == "rect_max_hole") c.masks.rect.max_hole_fraction = parse_double(value);
      else if (key == "rect_max_count") c.masks.rect.max_rects = parse_int(value);
      else if (key == "rect_min_side") c.masks.rect.min_side_fraction = parse_double(value);
      else if (key == "rect_max_side") c.masks.rect.max_side_fraction = parse_double(value);
      else if (key == "n_stripes") c.masks.n_stripes = parse_int(value);
      else if (key == "stripe_width") c.masks.stripe_width = parse_int(value);
      else if (key == "coverage") c.masks.coverage = parse_double(value);
      else if (key == "fill") c.fill = parse_fill(value);
      else if (key == "arm") c.arm = parse_arm(value);
      else if (key == "seed") c.seed = parse_uint(value);
      else if (key == "checkpoint_interval") c.checkpoint_interval = parse_int(value);
      else if (key == "eval_interval") c.eval_interval = parse_int(value);
      else if (key == "gen_base_channels") c.gen.base_channels = parse_int(value);
      else if (key == "gen_depth") c.gen.depth = parse_int(value);
      else if (key == "gen_dilations") c.gen.dilations = parse_ints(value);
      else if (key == "gen_mask_channel") c.gen.mask_channel = parse_bool(value);
      else if (key == "gen_leaky_alpha") c.gen.leaky_alpha = parse_double(value);
      else if (key == "disc_channels") c.disc.channels = parse_ints(value);
      else if (key == "disc_strides") c.disc.strides = parse_ints(value);
      else if (key == "disc_leaky_alpha") c.disc.leaky_alpha = parse_double(value);
      else if (key == "precision") c.precision = parse_precision(value);
      else if (key == "check_isolation") c.check_isolation = parse_bool(value);
      else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      if (std::string_view(e.what()).starts_with("unknown config key")) throw;
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
  return resolve(c);
}

TrainState make_train_state(const TrainConfig& config) {
  TrainState s;
  s.config = resolve(config);
  s.gen = init_generator(s.config.gen, {derive_seed(s.config.seed, 1)});
  s.disc = init_saad(s.config.disc, {derive_seed(s.config.seed, 2)});
  s.gen_opt = make_adam_state(s.gen);
  s.disc_opt = make_adam_state(s.disc);
  s.rng = Rng(derive_seed(s.config.seed, 3));
  return s;
}

StepLosses train_step(TrainState& state, const Tensor& batch) {
  const TrainConfig& cfg = state.config;
  if (batch.rank() != 4 || batch.dim(1) != cfg.channels) {
    throw ShapeError("train_step: batch must be [N," + std::to_string(cfg.channels) + ",H,W], got " +
                     shape_to_string(batch.shape()));
  }
  ops::PrecisionGuard precision(cfg.precision);
  GradModeGuard grad_on(true);

  MaskSuiteParams mp = cfg.masks;
  mp.height = batch.dim(2);
  mp.width = batch.dim(3);
  std::vector<Mask> masks;
  for (int64_t i = 0; i < batch.dim(0); ++i) masks.push_back(sample_mask(mp, state.rng));
  const Mask mask = Mask::stack(masks);

  StepLosses out;
  out.step = state.step + 1;
  std::string phase = "generator forward";
  auto diverged = [&](const std::string& what) {
    return TrainingDivergedError("step " + std::to_string(out.step) + ": " + what + " during " +
                                 phase + " (L_r=" + format_double(out.l_r) +
                                 " L_s_fake=" + format_double(out.l_s_fake) +
                                 " L_s_real=" + format_double(out.l_s_real) +
                                 " R1=" + format_double(out.r1) + ")");
  };
  try {
    const Tensor x_mask = apply_mask(batch, mask, cfg.fill);
    const Tensor x_tilde = generator_forward(cfg.gen, state.gen, x_mask, mask);
    const Tensor x_final = compose_output(x_mask, x_tilde, mask);
    const DiscriminatorFn d = [&](const Tensor& x) {
      return saad_forward(cfg.disc, state.disc, x).logits;
    };

    phase = "discriminator update";
    const ParamStore gen_before = cfg.check_isolation ? state.gen.clone() : ParamStore{};
    const DiscriminatorLoss dl = discriminator_loss(d, cfg.arm, batch, x_final, mask, cfg.loss);
    out.l_s_fake = dl.seg_fake;
    out.l_s_real = dl.seg_real;
    out.r1 = dl.r1;
    if (!std::isfinite(dl.total.item())) throw diverged("non-finite discriminator loss");
    backward(dl.total);
    adam_step(state.disc, state.disc_opt, cfg.lr_disc);
    if (cfg.check_isolation && !state.gen.bitwise_equal(gen_before)) {
      throw IsolationError("step " + std::to_string(out.step) +
                           ": discriminator update changed generator parameters");
    }

    phase = "generator update";
    const ParamStore disc_before = cfg.check_isolation ? state.disc.clone() : ParamStore{};
    {
      FreezeGuard freeze(state.disc);
      const GeneratorLoss gl = generator_loss(d, cfg.arm, batch, x_final, mask, cfg.loss);
      out.l_r = gl.reconstruction;
      out.l_adv = gl.adversarial;
      if (!std::isfinite(gl.total.item())) throw diverged("non-finite generator loss");
      backward(gl.total);
    }
    adam_step(state.gen, state.gen_opt, cfg.lr_gen);
    if (cfg.check_isolation && !state.disc.bitwise_equal(disc_before)) {
      throw IsolationError("step " + std::to_string(out.step) +
                           ": generator update changed discriminator parameters");
    }
  } catch (const NonFiniteError& e) {
    throw diverged(std::string("non-finite value (") + e.what() + ")");
  }
  state.step = out.step;
  return out;
}

std::vector<int64_t> draw_batch_indices(TrainState& state, int64_t n_images) {
  if (n_images < 1) throw std::invalid_argument("no training images");
  std::vector<int64_t> idx(static_cast<size_t>(state.config.batch_size));
  for (auto& i : idx) i = state.rng.uniform_int(0, n_images - 1);
  return idx;
}

std::string format_step_log(const StepLosses& s) {
  return std::to_string(s.step) + "," + format_double(s.l_r) + "," + format_double(s.l_s_fake) +
         "," + format_double(s.l_s_real) + "," + format_double(s.r1) + "," +
         format_double(s.l_adv);
}

std::vector<StepLosses> run_training(TrainState& state, const std::vector<Tensor>& images,
                                     const TrainOptions& options) {
  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);
  if (options.log) *options.log << kTrainLogHeader << "\n";
  std::vector<StepLosses> history;
  const TrainConfig& cfg = state.config;
  while (state.step < cfg.steps) {
    const auto idx = draw_batch_indices(state, static_cast<int64_t>(images.size()));
    const Tensor batch = stack_images(images, idx);
    StepLosses s;
    try {
      s = train_step(state, batch);
    } catch (const TrainingDivergedError& e) {
      if (!options.out_dir.empty()) {
        std::string dump = std::string(e.what()) + "\nbatch_indices=" + join_ints(idx) + "\n\n" +
                           to_key_values(cfg).to_text();
        write_text_file((fs::path(options.out_dir) / "divergence.txt").string(), dump);
      }
      throw;
    }
    history.push_back(s);
    if (options.log) *options.log << format_step_log(s) << "\n";
    if (options.on_step) options.on_step(state, s);
    if (!options.out_dir.empty() && cfg.checkpoint_interval > 0 &&
        state.step % cfg.checkpoint_interval == 0) {
      save_checkpoint(state, (fs::path(options.out_dir) / ("checkpoint_" + step_name(state.step) + ".bin")).string());
    }
  }
  if (!options.out_dir.empty()) {
    save_checkpoint(state, (fs::path(options.out_dir) / "checkpoint.bin").string());
  }
  return history;
}

std::vector<uint8_t> serialize_checkpoint(const TrainState& state) {
  ByteWriter out;
  out.raw({reinterpret_cast<const uint8_t*>(kCheckpointMagic.data()), kCheckpointMagic.size()});
  out.u32(kCheckpointVersion);
  out.str(to_key_values(state.config).to_text());
  out.i64(state.step);
  write_store(out, state.gen);
  write_store(out, state.disc);
  write_adam(out, state.gen_opt);
  write_adam(out, state.disc_opt);
  out.str(state.rng.serialize());
  out.finish_with_crc();
  return out.bytes();
}

TrainState deserialize_checkpoint(std::span<const uint8_t> bytes) {
  ByteReader in(verify_crc(bytes, "checkpoint"));
  in.expect_magic(kCheckpointMagic);
  const uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  TrainState s;
  s.config = train_config_from(parse_key_values(in.str()));
  s.step = in.i64();
  s.gen = read_store(in, true);
  s.disc = read_store(in, true);
  s.gen_opt = read_adam(in);
  s.disc_opt = read_adam(in);
  s.rng = Rng::deserialize(in.str());
  if (!in.at_end()) throw FormatError("checkpoint: trailing bytes");
  check_layout(init_generator(s.config.gen, {}), s.gen, "generator");
  check_layout(init_saad(s.config.disc, {}), s.disc, "discriminator");
  check_layout(s.gen, s.gen_opt.first_moment, "generator optimizer");
  check_layout(s.gen, s.gen_opt.second_moment, "generator optimizer");
  check_layout(s.disc, s.disc_opt.first_moment, "discriminator optimizer");
  check_layout(s.disc, s.disc_opt.second_moment, "discriminator optimizer");
  return s;
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  write_file(path, serialize_checkpoint(state));
}

TrainState load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

std::string checkpoint_hash(const TrainState& state) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_checkpoint(state))));
  return buf;
}

bool bitwise_equal(const TrainState& a, const TrainState& b) {
  return serialize_checkpoint(a) == serialize_checkpoint(b);
}

InpaintFn generator_inpainter(const GeneratorConfig& config, const ParamStore& params) {
  return [config, params](const Tensor& x_mask, const Mask& mask, int64_t) {
    NoGradGuard no_grad;
    return generator_forward(config, params, x_mask, mask);
  };
}

InpaintFn zero_inpainter() {
  return [](const Tensor& x_mask, const Mask&, int64_t) { return ops::zeros_like(x_mask); };
}

InpaintFn oracle_inpainter(const std::vector<Tensor>& images) {
  return [images](const Tensor&, const Mask&, int64_t index) {
    return images.at(static_cast<size_t>(index));
  };
}

void parallel_for(int64_t n, int64_t threads, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  const int64_t workers = std::clamp<int64_t>(threads, 1, n);
  if (workers == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::mutex error_mutex;
  int64_t error_index = n;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  for (int64_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int64_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          // Report the lowest failing index, independent of scheduling.
          std::lock_guard lock(error_mutex);
          if (i < error_index) {
            error_index = i;
            error = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

EvalResult evaluate(const std::vector<Tensor>& images, const MaskSuite& suite,
                    const InpaintFn& inpaint, const EvalOptions& options) {
  if (suite.masks.size() < images.size()) {
    throw std::invalid_argument("mask suite has " + std::to_string(suite.masks.size()) +
                                " masks for " + std::to_string(images.size()) + " images");
  }
  EvalResult result;
  result.records.resize(images.size());
  parallel_for(static_cast<int64_t>(images.size()), options.threads, [&](int64_t i) {
    NoGradGuard no_grad;
    const Tensor& x = images[static_cast<size_t>(i)];
    const Mask& m = suite.masks[static_cast<size_t>(i)];
    const Tensor x_mask = apply_mask(x, m, options.fill);
    const Tensor x_final = compose_output(x_mask, inpaint(x_mask, m, i), m);
    char id[32];
    std::snprintf(id, sizeof id, "%05lld", static_cast<long long>(i));
    auto& r = result.records[static_cast<size_t>(i)];
    r.image_id = id;
    r.method = options.method;
    r.coverage = coverage(m);
    r.psnr_db = psnr(x_final, x);
    r.ssim = ssim(x_final, x);
    r.checkpoint_id = options.checkpoint_id;
  });
  result.summary = summarize(result.records);
  return result;
}

double segmentation_auc(const TrainState& state, const std::vector<Tensor>& images,
                        const MaskSuite& suite) {
  if (suite.masks.size() < images.size()) throw std::invalid_argument("mask suite too small");
  NoGradGuard no_grad;
  ops::PrecisionGuard precision(ops::ComputePrecision::f64);
  std::vector<double> scores;
  std::vector<uint8_t> labels;
  for (size_t i = 0; i < images.size(); ++i) {
    const Mask& m = suite.masks[i];
    const Tensor x_mask = apply_mask(images[i], m, state.config.fill);
    const Tensor x_final =
        compose_output(x_mask, generator_forward(state.config.gen, state.gen, x_mask, m), m);
    // Ranking by logit equals ranking by probability.
    const Tensor logits = saad_forward(state.config.disc, state.disc, x_final).logits;
    const auto l = logits.data();
    const auto bits = m.bits(0);
    scores.insert(scores.end(), l.begin(), l.end());
    labels.insert(labels.end(), bits.begin(), bits.end());
  }
  return pixel_auc(scores, labels);
}

std::vector<SweepRow> sweep_coverage(const TrainConfig& base, const std::vector<Tensor>& train,
                                     const std::vector<Tensor>& test, const SweepOptions& options) {
  std::vector<Tensor> eval_set = test;
  if (options.eval_images > 0 && options.eval_images < static_cast<int64_t>(test.size())) {
    eval_set.resize(static_cast<size_t>(options.eval_images));
  }
  std::vector<SweepRow> rows;
  for (size_t li = 0; li < options.coverages.size(); ++li) {
    const double level = options.coverages[li];
    TrainConfig cfg = base;
    cfg.masks.kind = MaskKind::fixed_coverage;
    cfg.masks.coverage = level;
    cfg = resolve(cfg);
    const MaskSuite suite = build_mask_suite(cfg.masks, derive_seed(base.seed, 0x5eebu, li),
                                             static_cast<int64_t>(eval_set.size()));
    for (DiscriminatorArm arm : options.arms) {
      cfg.arm = arm;
      TrainState state = make_train_state(cfg);
      run_training(state, train);
      const EvalResult r = evaluate(eval_set, suite, generator_inpainter(cfg.gen, state.gen),
                                    {to_string(arm), checkpoint_hash(state), cfg.fill, options.threads});
      rows.push_back({level, to_string(arm), r.summary.psnr_mean, r.summary.ssim_mean});
      if (options.log) {
        *options.log << "coverage " << format_double(level) << " arm " << to_string(arm)
                     << " psnr_db " << format_double(r.summary.psnr_mean) << " ssim "
                     << format_double(r.summary.ssim_mean) << "\n";
      }
    }
  }
  return rows;
}

std::vector<std::string> dump_segmaps(const TrainState& state, const std::vector<Tensor>& images,
                                      const MaskSuite& suite, const std::string& out_dir) {
  if (suite.masks.size() < images.size()) throw std::invalid_argument("mask suite too small");
  fs::create_directories(out_dir);
  NoGradGuard no_grad;
  std::vector<std::string> files;
  for (size_t i = 0; i < images.size(); ++i) {
    const Mask& m = suite.masks[i];
    const Tensor x_mask = apply_mask(images[i], m, state.config.fill);
    const Tensor x_final =
        compose_output(x_mask, generator_forward(state.config.gen, state.gen, x_mask, m), m);
    const Tensor seg = ops::sigmoid(saad_forward(state.config.disc, state.disc, x_final).logits);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05zu", i);
    const std::pair<const char*, const Tensor*> parts[] = {
        {"_input.png", &x_mask}, {"_inpainted.png", &x_final}, {"_segmap.png", &seg}};
    for (const auto& [suffix, t] : parts) {
      const std::string path = (fs::path(out_dir) / (std::string(stem) + suffix)).string();
      save_image(*t, path);
      files.push_back(path);
    }
  }
  return files;
}

}  // namespace saad
