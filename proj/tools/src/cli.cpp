#include "cli.hpp"

#include <CLI11.hpp>
#include <torch/torch.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>

#include "avsr/checkpoint.hpp"
#include "avsr/error.hpp"
#include "avsr/image_io.hpp"
#include "avsr/kernel_cache.hpp"
#include "avsr/log.hpp"
#include "avsr/metrics.hpp"
#include "run_config.hpp"

namespace avsr::cli {

namespace fs = std::filesystem;

namespace {

/// Raised for problems the caller can fix on the command line.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> scale;
  std::optional<std::int64_t> window;
  std::optional<std::string> variant;
  bool precompute = false;
  std::string device = "cpu";
  bool overwrite = false;
  std::string log_level = "warn";

  std::string checkpoint;
  std::string input;
  std::string output;
  std::vector<std::string> variants;
  std::vector<std::int64_t> windows;
  std::vector<std::string> sizes;
};

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

RunConfig effective_config(const Flags& flags) {
  RunConfig cfg;
  if (!flags.config.empty()) cfg.load_file(flags.config);
  for (const auto& entry : flags.sets) {
    auto eq = entry.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + entry + "'");
    cfg.set(entry.substr(0, eq), entry.substr(eq + 1));
  }
  if (flags.seed) {
    cfg.model.seed = *flags.seed;
    cfg.train.seed = *flags.seed;
  }
  if (flags.window) cfg.model.window = *flags.window;
  if (flags.variant) cfg.model.variant = parse_variant(*flags.variant);
  if (flags.precompute) cfg.eval.precompute = true;
  if (flags.alpha || flags.beta || flags.scale) {
    double a = flags.alpha.value_or(flags.scale.value_or(1.0));
    double b = flags.beta.value_or(flags.scale.value_or(a));
    cfg.eval.scales = {{a, b}};
  }
  return cfg;
}

/// (alpha, beta) for single-scale commands.
std::pair<double, double> single_scale(const Flags& flags) {
  double a = flags.alpha.value_or(flags.scale.value_or(4.0));
  double b = flags.beta.value_or(flags.scale.value_or(flags.alpha.value_or(4.0)));
  if (!(a >= 1.0) || !(b >= 1.0)) {
    throw UsageError("scale factors must be >= 1 (got alpha " + format_double(a) + ", beta " +
                     format_double(b) + ")");
  }
  return {a, b};
}

fs::path prepare_run_dir(const RunConfig& cfg, const std::string& command,
                         const std::string& label, const std::string& extra, bool overwrite) {
  // The name depends on what runs, not where it is stored.
  RunConfig keyed = cfg;
  keyed.run_dir.clear();
  keyed.data.root += "|" + command + "|" + extra;
  fs::path dir = fs::path(cfg.run_dir) / (command + "-" + label + "-" + keyed.hash());
  if (fs::exists(dir)) {
    if (!overwrite) {
      throw UsageError("run directory " + dir.string() + " exists; pass --overwrite to replace it");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  std::ofstream(dir / "config.ini") << cfg.to_ini();
  return dir;
}

void require_data_root(const RunConfig& cfg) {
  if (cfg.data.root.empty()) throw UsageError("data.root is not set (dataset path required)");
}

Dataset open_dataset(const RunConfig& cfg) {
  require_data_root(cfg);
  fs::path root = cfg.data.root;
  if (cfg.data.generate && !fs::exists(root / "manifest.txt")) {
    log_info("writing synthetic dataset to " + root.string());
    return write_synthetic_dataset(root, cfg.data.train_clips, cfg.data.val_clips, cfg.data.synth);
  }
  if (!fs::exists(root)) throw UsageError("data.root '" + root.string() + "' does not exist");
  return load_dataset(root);
}

std::vector<torch::Tensor> load_clips(const std::vector<ClipSource>& sources) {
  std::vector<torch::Tensor> clips;
  for (const auto& s : sources) clips.push_back(load_clip(s));
  return clips;
}

std::vector<EvalClip> eval_clips(const Dataset& data) {
  const auto& sources = data.val.empty() ? data.train : data.val;
  if (sources.empty()) throw Error("dataset " + data.root.string() + " lists no clips");
  std::vector<EvalClip> clips;
  for (const auto& s : sources) clips.push_back({s.id, load_clip(s)});
  return clips;
}

EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions o;
  o.scales = cfg.eval.scales;
  o.degrade.mode = cfg.eval.degrade;
  o.degrade.noise_sigma = cfg.eval.noise_sigma;
  o.degrade.seed = cfg.data.synth.seed;
  o.precompute = cfg.eval.precompute;
  return o;
}

void write_report(const MetricReport& report, const fs::path& dir, const std::string& stem) {
  report.write_tsv(dir / (stem + ".tsv"));
  report.write_json(dir / (stem + ".json"));
}

void print_summary(std::ostream& out, const MetricReport& report) {
  for (const auto& s : report.summary()) {
    out << report.label << " x" << format_double(s.alpha) << "/" << format_double(s.beta)
        << " psnr " << format_double(s.psnr) << " ssim " << format_double(s.ssim) << " videos "
        << s.videos << "\n";
  }
}

TrainResult run_training(AvsrModelImpl& model, const std::vector<torch::Tensor>& clips,
                         const RunConfig& cfg, const fs::path& dir, std::ostream& out) {
  TrainHooks hooks;
  hooks.checkpoint_path = dir / "checkpoint.avsr";
  hooks.on_log = [&out](const LossRecord& r) {
    out << "step " << r.step << " lr " << format_double(r.lr) << " loss "
        << format_double(r.loss) << "\n";
  };
  auto result = train(model, clips, cfg.train, hooks);
  write_loss_curve(dir / "loss.tsv", result.curve);
  if (cfg.train.iterations == 0) save_checkpoint(model, hooks.checkpoint_path, 0);
  return result;
}

// ---- commands -------------------------------------------------------------

int cmd_synth(const Flags& flags, std::ostream& out) {
  auto cfg = effective_config(flags);
  require_data_root(cfg);
  fs::path root = cfg.data.root;
  if (fs::exists(root / "manifest.txt")) {
    if (!flags.overwrite) {
      throw UsageError("dataset " + root.string() + " exists; pass --overwrite to replace it");
    }
    fs::remove_all(root);
  }
  auto data = write_synthetic_dataset(root, cfg.data.train_clips, cfg.data.val_clips,
                                      cfg.data.synth);
  out << "dataset " << root.string() << " train " << data.train.size() << " val "
      << data.val.size() << "\n";
  return kExitOk;
}

int cmd_train(const Flags& flags, std::ostream& out) {
  auto cfg = effective_config(flags);
  require_data_root(cfg);
  cfg.model.validate();
  cfg.train.validate();
  auto data = open_dataset(cfg);
  auto clips = load_clips(data.train);
  if (clips.empty()) throw Error("dataset " + data.root.string() + " has no train clips");
  auto dir = prepare_run_dir(cfg, "train", to_string(cfg.model.variant), "", flags.overwrite);
  out << "run " << dir.string() << "\n";
  auto model = build_variant(cfg.model);
  auto result = run_training(*model, clips, cfg, dir, out);
  out << "trained " << result.steps << " steps in " << format_double(result.seconds) << " s\n";
  out << "checkpoint " << (dir / "checkpoint.avsr").string() << "\n";
  return kExitOk;
}

fs::path bank_file(const fs::path& dir, const BankKey& key) {
  char name[160];
  std::snprintf(name, sizeof name, "bank_%s_%s_%lldx%lld_k%lld_%016llx.bin",
                format_double(key.alpha).c_str(), format_double(key.beta).c_str(),
                static_cast<long long>(key.in_h), static_cast<long long>(key.in_w),
                static_cast<long long>(key.kernel),
                static_cast<unsigned long long>(key.parameter_version));
  return dir / name;
}

BankKey key_for(AvsrModelImpl& model, const ScaleSpec& spec) {
  BankKey key;
  key.alpha = spec.alpha();
  key.beta = spec.beta();
  key.in_h = spec.in_h();
  key.in_w = spec.in_w();
  key.kernel = model.config().kernel;
  key.parameter_version = parameter_version(*model.hyperup()->mlp());
  return key;
}

/// Loads the bank from AVSR_CACHE_DIR into the model's cache, or computes and
/// stores it there.
void warm_bank(AvsrModelImpl& model, const ScaleSpec& spec, std::ostream& out) {
  const char* env = std::getenv("AVSR_CACHE_DIR");
  if (env == nullptr || *env == '\0') {
    model.precompute(spec);
    return;
  }
  fs::path dir = env;
  auto key = key_for(model, spec);
  auto file = bank_file(dir, key);
  if (fs::exists(file)) {
    try {
      auto bank = import_bank(file);
      if (bank.key == key) {
        model.cache()->insert(std::move(bank));
        out << "bank loaded " << file.string() << "\n";
        return;
      }
      log_warn("bank " + file.string() + " has a different key; recomputing");
    } catch (const Error& e) {
      log_warn(std::string("ignoring unreadable bank: ") + e.what());
    }
  }
  auto bank = model.precompute(spec);
  fs::create_directories(dir);
  export_bank(file, *bank);
  out << "bank stored " << file.string() << "\n";
}

int cmd_infer(const Flags& flags, std::ostream& out) {
  auto [alpha, beta] = single_scale(flags);
  if (flags.output.empty()) throw UsageError("--output is required");
  fs::path output = flags.output;
  if (fs::exists(output) && !list_frames(output).empty()) {
    if (!flags.overwrite) {
      throw UsageError("output " + output.string() + " holds frames; pass --overwrite to replace");
    }
    fs::remove_all(output);
  }
  auto model = load_checkpoint(flags.checkpoint);
  model->eval();
  auto video = read_video(flags.input);
  torch::NoGradGuard no_grad;
  ScaleSpec spec(alpha, beta, video.size(-2), video.size(-1));
  if (flags.precompute) {
    auto t0 = std::chrono::steady_clock::now();
    warm_bank(*model, spec, out);
    out << "precompute_ms " << format_double(elapsed_ms(t0)) << "\n";
  }
  auto t0 = std::chrono::steady_clock::now();
  auto sr = model->super_resolve(video, alpha, beta, flags.precompute);
  double ms = elapsed_ms(t0);
  write_video(output, sr);
  out << "frames " << sr.size(0) << " size " << sr.size(-2) << "x" << sr.size(-1) << "\n";
  out << "per_frame_ms " << format_double(ms / static_cast<double>(sr.size(0))) << "\n";
  return kExitOk;
}

int cmd_eval(const Flags& flags, std::ostream& out) {
  auto cfg = effective_config(flags);
  require_data_root(cfg);
  auto data = open_dataset(cfg);
  auto clips = eval_clips(data);
  auto model = load_checkpoint(flags.checkpoint);
  model->eval();
  auto dir = prepare_run_dir(cfg, "eval", to_string(model->config().variant),
                             fs::absolute(flags.checkpoint).string(), flags.overwrite);
  out << "run " << dir.string() << "\n";
  auto options = eval_options(cfg);
  auto report = evaluate(*model, clips, options, to_string(model->config().variant));
  write_report(report, dir, "report");
  auto bicubic = evaluate_bicubic(clips, options);
  write_report(bicubic, dir, "bicubic");
  print_summary(out, report);
  print_summary(out, bicubic);
  return kExitOk;
}

int cmd_ablate(const Flags& flags, std::ostream& out) {
  auto cfg = effective_config(flags);
  require_data_root(cfg);
  cfg.train.validate();

  struct Arm {
    std::string label;
    ModelConfig model;
  };
  std::vector<Arm> arms;
  std::vector<std::string> names = flags.variants.empty() ? variant_names() : flags.variants;
  for (const auto& name : names) {
    Arm arm{name, cfg.model};
    arm.model.variant = parse_variant(name);
    arms.push_back(arm);
  }
  for (auto w : flags.windows) {
    Arm arm{"st-avsr-L" + std::to_string(w), cfg.model};
    arm.model.variant = Variant::kStAvsr;
    arm.model.window = w;
    arms.push_back(arm);
  }
  for (const auto& arm : arms) arm.model.validate();

  auto data = open_dataset(cfg);
  auto train_clips = load_clips(data.train);
  auto clips = eval_clips(data);
  std::string extra;
  for (const auto& arm : arms) extra += arm.label + ",";
  auto dir = prepare_run_dir(cfg, "ablate", "sweep", extra, flags.overwrite);
  out << "run " << dir.string() << "\n";

  auto options = eval_options(cfg);
  std::ofstream table(dir / "ablation.tsv");
  table << "label\talpha\tbeta\tpsnr\tssim\tvideos\n";
  for (const auto& arm : arms) {
    auto arm_dir = dir / arm.label;
    fs::create_directories(arm_dir);
    auto model = build_variant(arm.model);
    if (cfg.train.iterations > 0) {
      if (train_clips.empty()) throw Error("dataset has no train clips");
      RunConfig arm_cfg = cfg;
      arm_cfg.model = arm.model;
      run_training(*model, train_clips, arm_cfg, arm_dir, out);
    }
    model->eval();
    auto report = evaluate(*model, clips, options, arm.label);
    write_report(report, arm_dir, "report");
    for (const auto& s : report.summary()) {
      table << arm.label << "\t" << format_double(s.alpha) << "\t" << format_double(s.beta)
            << "\t" << format_double(s.psnr) << "\t" << format_double(s.ssim) << "\t" << s.videos
            << "\n";
    }
    print_summary(out, report);
  }
  auto bicubic = evaluate_bicubic(clips, options);
  write_report(bicubic, dir, "bicubic");
  print_summary(out, bicubic);
  return kExitOk;
}

std::pair<std::int64_t, std::int64_t> parse_size(const std::string& text) {
  auto x = text.find_first_of("xX");
  try {
    if (x != std::string::npos) {
      std::size_t used_h = 0;
      std::size_t used_w = 0;
      auto h = std::stoll(text.substr(0, x), &used_h);
      auto w = std::stoll(text.substr(x + 1), &used_w);
      if (used_h == x && used_w == text.size() - x - 1 && h > 0 && w > 0) return {h, w};
    }
  } catch (const std::exception&) {
  }
  throw UsageError("--size expects HxW, got '" + text + "'");
}

int cmd_precompute(const Flags& flags, std::ostream& out) {
  auto cfg = effective_config(flags);
  if (flags.sizes.empty()) throw UsageError("--size HxW is required");
  std::vector<std::pair<std::int64_t, std::int64_t>> sizes;
  for (const auto& s : flags.sizes) sizes.push_back(parse_size(s));
  auto model = load_checkpoint(flags.checkpoint);
  model->eval();

  fs::path dir;
  if (const char* env = std::getenv("AVSR_CACHE_DIR"); env != nullptr && *env != '\0') {
    dir = env;
    fs::create_directories(dir);
  } else {
    dir = prepare_run_dir(cfg, "precompute", to_string(model->config().variant),
                          fs::absolute(flags.checkpoint).string(), flags.overwrite);
  }
  torch::NoGradGuard no_grad;
  for (const auto& [alpha, beta] : cfg.eval.scales) {
    for (const auto& [h, w] : sizes) {
      ScaleSpec spec(alpha, beta, h, w);
      auto t0 = std::chrono::steady_clock::now();
      auto bank = model->precompute(spec);
      double ms = elapsed_ms(t0);
      auto file = bank_file(dir, bank->key);
      export_bank(file, *bank);
      out << "bank " << file.string() << " out " << bank->out_h() << "x" << bank->out_w()
          << " taps " << bank->taps() << " ms " << format_double(ms) << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Arbitrary-scale video super-resolution"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags flags;

  app.add_option("--config", flags.config, "Sectioned key = value run configuration")
      ->check(CLI::ExistingFile);
  app.add_option("--set", flags.sets, "Override one config entry: section.key=value")
      ->allow_extra_args(false);
  app.add_option("--seed", flags.seed, "Seed for model initialisation and training");
  app.add_option("--alpha", flags.alpha, "Vertical scale factor");
  app.add_option("--beta", flags.beta, "Horizontal scale factor");
  app.add_option("--scale", flags.scale, "Shorthand for --alpha S --beta S");
  app.add_option("--window", flags.window, "Cross-attention window length L");
  app.add_option("--variant", flags.variant,
                 "Model variant (" + CLI::detail::join(variant_names(), ", ") + ")");
  app.add_flag("--precompute", flags.precompute, "Build the kernel bank before inference");
  app.add_option("--device", flags.device, "Compute device (cpu)");
  app.add_flag("--overwrite", flags.overwrite, "Replace an existing run directory or output");
  app.add_option("--log-level", flags.log_level, "debug, info, warn, error or off");

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset to data.root");
  auto* train_cmd = app.add_subcommand("train", "Train a model on data.root");
  auto* infer = app.add_subcommand("infer", "Super-resolve a directory of PNG frames");
  infer->add_option("--checkpoint", flags.checkpoint, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  infer->add_option("--input", flags.input, "Directory of LR frames")
      ->required()
      ->check(CLI::ExistingDirectory);
  infer->add_option("--output", flags.output, "Directory for SR frames")->required();
  auto* eval = app.add_subcommand("eval", "Score a checkpoint against bicubic on data.root");
  eval->add_option("--checkpoint", flags.checkpoint, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  auto* ablate = app.add_subcommand("ablate", "Train and score a set of variants");
  ablate->add_option("--variants", flags.variants, "Variants to run (default: all)")
      ->delimiter(',');
  ablate->add_option("--windows", flags.windows, "Extra st-avsr arms with these window lengths")
      ->delimiter(',');
  auto* precompute = app.add_subcommand("precompute", "Export kernel banks for scales and sizes");
  precompute->add_option("--checkpoint", flags.checkpoint, "Trained checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  precompute->add_option("--size", flags.sizes, "LR frame size HxW (repeatable)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    set_log_level(parse_log_level(flags.log_level));
    if (flags.device != "cpu") {
      throw UsageError("unsupported device '" + flags.device + "' (this build runs on cpu)");
    }
    torch::manual_seed(0);
    if (synth->parsed()) return cmd_synth(flags, out);
    if (train_cmd->parsed()) return cmd_train(flags, out);
    if (infer->parsed()) return cmd_infer(flags, out);
    if (eval->parsed()) return cmd_eval(flags, out);
    if (ablate->parsed()) return cmd_ablate(flags, out);
    if (precompute->parsed()) return cmd_precompute(flags, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace avsr::cli
