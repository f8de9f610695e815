// saad: command-line front end for data generation, training, evaluation
// and diagnostics.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "saad/dataset.hpp"
#include "saad/grad_suite.hpp"
#include "saad/image_io.hpp"
#include "saad/masking.hpp"
#include "saad/metrics.hpp"
#include "saad/text.hpp"
#include "saad/train.hpp"

namespace fs = std::filesystem;
using namespace saad;

namespace {

// Thrown for argument combinations CLI11 cannot express; maps to exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

// Every option of `cmd` as key=value, parsed values or defaults.
KeyValues echo_options(const CLI::App& cmd) {
  KeyValues kv;
  kv.set("command", cmd.get_name());
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt == cmd.get_help_ptr()) continue;
    std::string name = opt->get_name(false, true);
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    std::string value;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      for (size_t i = 0; i < res.size(); ++i) value += (i ? ";" : "") + res[i];
    } else {
      value = opt->get_default_str();
    }
    kv.set(name, value);
  }
  return kv;
}

void write_echo(const KeyValues& kv, const fs::path& dir) {
  fs::create_directories(dir);
  write_text_file((dir / "config.echo").string(), kv.to_text());
}

fs::path parent_or_cwd(const std::string& file) {
  const fs::path p = fs::path(file).parent_path();
  return p.empty() ? fs::path(".") : p;
}

MaskKind mask_kind_arg(const std::string& s) { return parse_mask_kind(s); }

Mask load_mask_png(const std::string& path) {
  const Tensor t = load_image(path);
  if (t.dim(1) != 1) throw ImageFormatError(path + ": mask PNG must be grayscale");
  std::vector<uint8_t> bits;
  for (double v : t.data()) bits.push_back(v > 0.5 ? 1 : 0);
  return Mask::from_bits(t.dim(2), t.dim(3), bits);
}

// Training options shared by `train` and `sweep`. Flags are stored as
// strings so that only the ones given override the config file.
struct TrainFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::string> seed, steps, batch_size, arm, lr_gen, lr_disc, lambda_adv, gamma_r1,
      mask_kind, precision, checkpoint_interval;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file; flags override it")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "Override any config key, as key=value (repeatable)");
    cmd->add_option("--seed", seed, "Master seed (default 0)");
    cmd->add_option("--steps", steps, "Training steps (default 1000)");
    cmd->add_option("--batch-size", batch_size, "Images per step (default 8)");
    cmd->add_option("--arm", arm, "Discriminator arm: saad | patch_mean | global (default saad)");
    cmd->add_option("--lr-gen", lr_gen, "Generator learning rate (default 1e-4)");
    cmd->add_option("--lr-disc", lr_disc, "Discriminator learning rate (default 4e-4)");
    cmd->add_option("--lambda-adv", lambda_adv, "Adversarial loss weight (default 0.1)");
    cmd->add_option("--gamma-r1", gamma_r1, "R1 penalty weight (default 10)");
    cmd->add_option("--mask-kind", mask_kind,
                    "Training masks: rectangles | stripes | fixed_coverage (default rectangles)");
    cmd->add_option("--precision", precision, "Convolution GEMM precision: f64 | f32 (default f64)");
    cmd->add_option("--checkpoint-interval", checkpoint_interval,
                    "Steps between checkpoints; 0 keeps only the final one (default 0)");
  }

  TrainConfig resolve_config(int64_t image_size, int64_t channels) const {
    KeyValues kv = config_path.empty() ? KeyValues{} : read_key_values(config_path);
    kv.set("image_size", std::to_string(image_size));
    kv.set("channels", std::to_string(channels));
    const std::pair<const char*, const std::optional<std::string>*> flags[] = {
        {"seed", &seed},
        {"steps", &steps},
        {"batch_size", &batch_size},
        {"arm", &arm},
        {"lr_gen", &lr_gen},
        {"lr_disc", &lr_disc},
        {"lambda_adv", &lambda_adv},
        {"gamma_r1", &gamma_r1},
        {"mask_kind", &mask_kind},
        {"precision", &precision},
        {"checkpoint_interval", &checkpoint_interval}};
    for (const auto& [key, value] : flags) {
      if (*value) kv.set(key, **value);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
      kv.set(std::string(trim(s.substr(0, eq))), std::string(trim(s.substr(eq + 1))));
    }
    return train_config_from(kv);
  }
};

void append(KeyValues& dst, const KeyValues& src, const std::string& prefix) {
  for (const auto& [k, v] : src.entries) dst.set(prefix + k, v);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (const auto& part : split(s, ',')) {
    if (!trim(part).empty()) out.emplace_back(trim(part));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Texture inpainting with a segmentation discriminator"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  int64_t threads = 1;
  app.add_option("--threads", threads, "Worker threads for evaluation (training is single-threaded)")
      ->check(CLI::Range(int64_t{1}, int64_t{256}));

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset manifest, or ingest PNG folders");
  std::string gen_out;
  SyntheticDatasetParams gp;
  std::string gen_kinds = "stripes,layered_bands", gen_ingest;
  bool gen_png = false, gen_crop = false;
  gen->add_option("--out", gen_out, "Output directory (manifest.txt, config.echo)")->required();
  gen->add_option("--n-train", gp.n_train, "Training images");
  gen->add_option("--n-val", gp.n_val, "Validation images");
  gen->add_option("--n-test", gp.n_test, "Test images");
  gen->add_option("--size", gp.image_size, "Square image side");
  gen->add_option("--channels", gp.channels, "1 or 3");
  gen->add_option("--kinds", gen_kinds, "Comma-separated texture kinds");
  gen->add_option("--seed", gp.seed, "Dataset seed");
  gen->add_flag("--export-png", gen_png, "Also write <out>/<split>/<index>.png");
  gen->add_option("--ingest", gen_ingest,
                  "Build the manifest from <dir>/{train,val,test}/*.png instead");
  gen->add_flag("--center-crop", gen_crop, "With --ingest: crop larger images to --size");

  // make-masks
  auto* mk = app.add_subcommand("make-masks", "Write a fixed evaluation mask suite");
  std::string mk_out, mk_kind = "rectangles", mk_png;
  int64_t mk_n = 50, mk_size = 64;
  uint64_t mk_seed = 0;
  MaskSuiteParams mkp;
  mk->add_option("--out", mk_out, "Suite file")->required();
  mk->add_option("--n", mk_n, "Number of masks");
  mk->add_option("--kind", mk_kind, "rectangles | stripes | fixed_coverage");
  mk->add_option("--size", mk_size, "Square mask side");
  mk->add_option("--coverage", mkp.coverage, "fixed_coverage: observed fraction");
  mk->add_option("--n-stripes", mkp.n_stripes, "stripes: stripe count");
  mk->add_option("--stripe-width", mkp.stripe_width, "stripes: width in pixels");
  mk->add_option("--seed", mk_seed, "Suite seed");
  mk->add_option("--png-dir", mk_png, "Also write each mask as a PNG here");

  // train
  auto* tr = app.add_subcommand("train", "Train generator and discriminator");
  TrainFlags tflags;
  std::string tr_manifest, tr_out, tr_resume;
  int64_t tr_log_every = 50;
  tflags.add_to(tr);
  tr->add_option("--manifest", tr_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Run directory (checkpoints, train_log.csv, config.echo)")->required();
  tr->add_option("--resume", tr_resume, "Continue from this checkpoint; --steps sets the new total")
      ->check(CLI::ExistingFile);
  tr->add_option("--log-every", tr_log_every, "Print losses every N steps (0 = quiet)");

  // eval
  auto* ev = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on a fixed mask suite");
  std::string ev_ckpt, ev_manifest, ev_masks, ev_out, ev_split = "test", ev_baseline, ev_method;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->check(CLI::ExistingFile);
  ev->add_option("--manifest", ev_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--masks", ev_masks, "Mask suite file")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Per-image metrics CSV")->required();
  ev->add_option("--split", ev_split, "train | val | test");
  ev->add_option("--baseline", ev_baseline, "Use a baseline instead of a checkpoint: zero");
  ev->add_option("--method", ev_method, "Method tag in the CSV (default: the checkpoint's arm)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Train and evaluate one model per coverage level and arm");
  TrainFlags sflags;
  std::string sw_manifest, sw_out, sw_cov = "0.45,0.65,0.85", sw_arms = "saad";
  int64_t sw_eval = 0;
  sflags.add_to(sw);
  sw->add_option("--manifest", sw_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  sw->add_option("--out", sw_out, "Output directory (sweep.csv, config.echo)")->required();
  sw->add_option("--coverages", sw_cov, "Comma-separated observed fractions");
  sw->add_option("--arms", sw_arms, "Comma-separated arms");
  sw->add_option("--eval-images", sw_eval, "Test images per level; 0 = all");

  // infer
  auto* inf = app.add_subcommand("infer", "Inpaint one image");
  std::string inf_ckpt, inf_image, inf_mask, inf_masks, inf_out;
  int64_t inf_index = 0;
  inf->add_option("--checkpoint", inf_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  inf->add_option("--image", inf_image, "Input PNG")->required()->check(CLI::ExistingFile);
  auto* inf_mask_opt = inf->add_option("--mask", inf_mask, "Mask PNG, nonzero = hole")->check(CLI::ExistingFile);
  inf->add_option("--masks", inf_masks, "Mask suite file (with --index)")
      ->check(CLI::ExistingFile)
      ->excludes(inf_mask_opt);
  inf->add_option("--index", inf_index, "Mask index within --masks");
  inf->add_option("--out", inf_out, "Output PNG")->required();

  // dump-segmaps
  auto* ds = app.add_subcommand("dump-segmaps", "Write input / inpainted / segmentation-map PNGs");
  std::string ds_ckpt, ds_manifest, ds_masks, ds_out, ds_split = "test";
  int64_t ds_count = 8;
  ds->add_option("--checkpoint", ds_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ds->add_option("--manifest", ds_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  ds->add_option("--masks", ds_masks, "Mask suite file")->required()->check(CLI::ExistingFile);
  ds->add_option("--out", ds_out, "Output directory")->required();
  ds->add_option("--split", ds_split, "train | val | test");
  ds->add_option("--count", ds_count, "Images to dump");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient suite");
  GradSuiteOptions gco;
  double gc_tol = 1e-4;
  std::string gc_out = ".";
  gc->add_option("--seed", gco.seed, "Input seed");
  gc->add_option("--eps", gco.eps, "Central-difference step");
  gc->add_option("--coords", gco.composite_coords, "Coordinates per parameter tensor in composites");
  gc->add_option("--tolerance", gc_tol, "Maximum relative error");
  gc->add_option("--out", gc_out, "Directory for config.echo and grad_check.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "usage error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  try {
    if (*gen) {
      DatasetManifest m;
      if (!gen_ingest.empty()) {
        m = ingest_directory(gen_ingest, gp.image_size, gp.channels, gen_crop);
        m.seed = gp.seed;
      } else {
        gp.kinds.clear();
        for (const auto& k : split_list(gen_kinds)) gp.kinds.push_back(parse_texture_kind(k));
        m = make_synthetic_dataset(gp);
      }
      fs::create_directories(gen_out);
      save_manifest(m, (fs::path(gen_out) / "manifest.txt").string());
      if (gen_png) export_dataset_pngs(m, gen_out);
      write_echo(echo_options(*gen), gen_out);
      std::cout << "manifest " << (fs::path(gen_out) / "manifest.txt").string() << " train "
                << m.train.size() << " val " << m.val.size() << " test " << m.test.size() << "\n";
    } else if (*mk) {
      mkp.kind = mask_kind_arg(mk_kind);
      mkp.height = mkp.width = mk_size;
      const MaskSuite suite = build_mask_suite(mkp, mk_seed, mk_n);
      fs::create_directories(parent_or_cwd(mk_out));
      save_mask_suite(suite, mk_out);
      if (!mk_png.empty()) {
        fs::create_directories(mk_png);
        for (size_t i = 0; i < suite.masks.size(); ++i) {
          char name[32];
          std::snprintf(name, sizeof name, "%05zu.png", i);
          save_mask_png(suite.masks[i], 0, (fs::path(mk_png) / name).string());
        }
      }
      write_echo(echo_options(*mk), parent_or_cwd(mk_out));
      double cov = 0.0;
      for (const auto& m : suite.masks) cov += coverage(m) / static_cast<double>(suite.masks.size());
      std::cout << "masks " << mk_out << " count " << suite.masks.size() << " mean_coverage "
                << format_double(cov) << "\n";
    } else if (*tr) {
      const DatasetManifest m = load_manifest(tr_manifest);
      TrainState state;
      if (!tr_resume.empty()) {
        state = load_checkpoint(tr_resume);
        if (tflags.steps) state.config.steps = parse_int(*tflags.steps);
      } else {
        state = make_train_state(tflags.resolve_config(m.image_size, m.channels));
      }
      KeyValues echo = echo_options(*tr);
      echo.set("threads", std::to_string(threads));
      append(echo, to_key_values(state.config), "train.");
      write_echo(echo, tr_out);
      const auto images = load_split(m, Split::train);
      std::ofstream log(fs::path(tr_out) / "train_log.csv", tr_resume.empty() ? std::ios::trunc : std::ios::app);
      TrainOptions opts;
      opts.out_dir = tr_out;
      opts.log = &log;
      const auto t0 = std::chrono::steady_clock::now();
      opts.on_step = [&](const TrainState& s, const StepLosses& l) {
        if (tr_log_every > 0 && s.step % tr_log_every == 0) {
          const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          std::cout << "step " << l.step << " L_r " << format_double(l.l_r) << " L_s_fake "
                    << format_double(l.l_s_fake) << " L_s_real " << format_double(l.l_s_real)
                    << " R1 " << format_double(l.r1) << " L_adv " << format_double(l.l_adv) << " ("
                    << static_cast<int64_t>(secs) << " s)\n"
                    << std::flush;
        }
      };
      run_training(state, images, opts);
      std::cout << "checkpoint " << (fs::path(tr_out) / "checkpoint.bin").string() << "\n";
      std::cout << "checkpoint_hash " << checkpoint_hash(state) << "\n";
    } else if (*ev) {
      const DatasetManifest m = load_manifest(ev_manifest);
      const MaskSuite suite = load_mask_suite(ev_masks);
      const auto images = load_split(m, parse_split(ev_split));
      EvalOptions eo;
      eo.threads = threads;
      InpaintFn fn;
      if (ev_baseline == "zero") {
        fn = zero_inpainter();
        eo.method = ev_method.empty() ? "zero_fill" : ev_method;
      } else if (!ev_baseline.empty()) {
        throw UsageError("unknown baseline '" + ev_baseline + "' (expected: zero)");
      } else {
        if (ev_ckpt.empty()) throw UsageError("eval needs --checkpoint or --baseline");
        const TrainState s = load_checkpoint(ev_ckpt);
        fn = generator_inpainter(s.config.gen, s.gen);
        eo.method = ev_method.empty() ? to_string(s.config.arm) : ev_method;
        eo.checkpoint_id = checkpoint_hash(s);
        eo.fill = s.config.fill;
      }
      const EvalResult r = evaluate(images, suite, fn, eo);
      write_metrics_csv(r.records, ev_out);
      KeyValues echo = echo_options(*ev);
      echo.set("threads", std::to_string(threads));
      write_echo(echo, parent_or_cwd(ev_out));
      std::cout << "images " << r.summary.count << " psnr_db " << format_double(r.summary.psnr_mean)
                << " +- " << format_double(r.summary.psnr_std) << " ssim "
                << format_double(r.summary.ssim_mean) << " +- " << format_double(r.summary.ssim_std)
                << " coverage " << format_double(r.summary.coverage_mean) << "\n";
    } else if (*sw) {
      const DatasetManifest m = load_manifest(sw_manifest);
      const TrainConfig base = sflags.resolve_config(m.image_size, m.channels);
      SweepOptions so;
      so.coverages.clear();
      for (const auto& c : split_list(sw_cov)) so.coverages.push_back(parse_double(c));
      so.arms.clear();
      for (const auto& a : split_list(sw_arms)) so.arms.push_back(parse_arm(a));
      so.eval_images = sw_eval;
      so.threads = threads;
      so.log = &std::cout;
      KeyValues echo = echo_options(*sw);
      echo.set("threads", std::to_string(threads));
      append(echo, to_key_values(base), "train.");
      write_echo(echo, sw_out);
      const auto rows = sweep_coverage(base, load_split(m, Split::train), load_split(m, Split::test), so);
      write_sweep_csv(rows, (fs::path(sw_out) / "sweep.csv").string());
      std::cout << sweep_csv(rows);
    } else if (*inf) {
      const TrainState s = load_checkpoint(inf_ckpt);
      const Tensor x = load_image(inf_image, {s.config.image_size, false});
      Mask mask;
      if (!inf_mask.empty()) {
        mask = load_mask_png(inf_mask);
      } else if (!inf_masks.empty()) {
        const MaskSuite suite = load_mask_suite(inf_masks);
        if (inf_index < 0 || inf_index >= static_cast<int64_t>(suite.masks.size())) {
          throw UsageError("--index out of range for the suite");
        }
        mask = suite.masks[static_cast<size_t>(inf_index)];
      } else {
        throw UsageError("infer needs --mask or --masks");
      }
      NoGradGuard no_grad;
      const Tensor xm = apply_mask(x, mask, s.config.fill);
      const Tensor out = compose_output(xm, generator_forward(s.config.gen, s.gen, xm, mask), mask);
      fs::create_directories(parent_or_cwd(inf_out));
      save_image(out, inf_out);
      write_echo(echo_options(*inf), parent_or_cwd(inf_out));
      std::cout << "wrote " << inf_out << " coverage " << format_double(coverage(mask)) << "\n";
    } else if (*ds) {
      const TrainState s = load_checkpoint(ds_ckpt);
      const DatasetManifest m = load_manifest(ds_manifest);
      auto images = load_split(m, parse_split(ds_split));
      if (ds_count >= 0 && ds_count < static_cast<int64_t>(images.size())) images.resize(static_cast<size_t>(ds_count));
      const auto files = dump_segmaps(s, images, load_mask_suite(ds_masks), ds_out);
      write_echo(echo_options(*ds), ds_out);
      std::cout << "wrote " << files.size() << " files to " << ds_out << "\n";
    } else if (*gc) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto rows = run_grad_suite(gco);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const std::string table = format_grad_table(rows, gc_tol);
      bool ok = true;
      for (const auto& r : rows) ok = ok && grad_row_passes(r, gc_tol);
      std::cout << table << "total_seconds " << format_double(std::round(secs * 10) / 10) << "\n"
                << (ok ? "all checks passed" : "some checks failed") << "\n";
      write_echo(echo_options(*gc), gc_out);
      write_text_file((fs::path(gc_out) / "grad_check.txt").string(), table);
      if (!ok) {
        std::cerr << "ERROR: gradient check failed\n";
        return 1;
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ERROR: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}
