#include "avsr/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "avsr/checkpoint.hpp"
#include "avsr/data.hpp"
#include "avsr/error.hpp"
#include "avsr/init.hpp"
#include "avsr/log.hpp"

namespace avsr {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (iterations < 0) fail("iterations must be >= 0");
  if (lr_init < 0 || lr_final < 0) fail("learning rates must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (patch < 1) fail("patch must be >= 1");
  if (frames < 1) fail("frames must be >= 1");
  if (crops < 1) fail("crops must be >= 1");
  if (!(epsilon > 0)) fail("epsilon must be > 0");
  if (scale_min < 1.0 || scale_max < scale_min) fail("need 1 <= scale_min <= scale_max");
  if (log_every < 1) fail("log_every must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
}

double cosine_lr(std::int64_t step, std::int64_t iterations, double lr_init, double lr_final) {
  if (iterations <= 0 || step >= iterations) return step <= 0 ? lr_init : lr_final;
  const double progress = static_cast<double>(step) / static_cast<double>(iterations);
  return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
}

torch::Tensor charbonnier_loss(const torch::Tensor& pred, const torch::Tensor& gt, double epsilon) {
  require(pred.sizes() == gt.sizes(), "charbonnier_loss: shape mismatch");
  require(epsilon > 0, "charbonnier_loss: epsilon must be positive");
  auto d = pred - gt;
  return torch::sqrt(d * d + epsilon).mean();
}

double snap_scale(double scale, std::int64_t patch) {
  const double p = static_cast<double>(patch);
  return std::max(1.0, std::round(scale * p) / p);
}

namespace {

double grad_norm(const std::vector<torch::Tensor>& params) {
  double total = 0.0;
  for (const auto& p : params) {
    if (p.grad().defined()) total += p.grad().to(torch::kFloat64).pow(2).sum().item<double>();
  }
  return std::sqrt(total);
}

std::string diagnostics(std::int64_t step, double lr, double loss, double gnorm) {
  std::ostringstream os;
  os << "training aborted at step " << step << ": loss " << loss << ", lr " << lr
     << ", grad-norm " << gnorm;
  return os.str();
}

}  // namespace

TrainResult train(AvsrModelImpl& model, const std::vector<torch::Tensor>& clips,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  require(!clips.empty(), "train: no training clips");
  const auto hr_needed = static_cast<std::int64_t>(std::ceil(config.scale_max * config.patch - 1e-9));
  for (const auto& c : clips) {
    require(c.dim() == 4 && c.size(1) == 3, "train: clips must be T x 3 x H x W");
    if (c.size(0) < config.frames || c.size(2) < hr_needed || c.size(3) < hr_needed) {
      throw InvalidInput("train: clip " + std::to_string(c.size(0)) + "x" + std::to_string(c.size(2)) +
                         "x" + std::to_string(c.size(3)) + " is too small for " +
                         std::to_string(config.frames) + " frames of " + std::to_string(hr_needed) +
                         " px patches");
    }
  }

  auto params = model.trainable_parameters();
  torch::optim::Adam optimizer(
      params, torch::optim::AdamOptions(config.lr_init).betas({0.9, 0.999}).weight_decay(0.0));
  auto gen = make_generator(config.seed);
  const auto dtype = params.empty() ? torch::kFloat32 : params.front().scalar_type();
  model.train();

  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t step = 0; step < config.iterations; ++step) {
    const double lr = cosine_lr(step, config.iterations, config.lr_init, config.lr_final);
    for (auto& group : optimizer.param_groups()) {
      static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }

    double alpha = config.scale_min;
    double beta = config.scale_min;
    if (config.scale_max > config.scale_min) {
      alpha = sample_scale(gen, config.scale_min, config.scale_max);
      beta = sample_scale(gen, config.scale_min, config.scale_max);
    }
    alpha = snap_scale(alpha, config.patch);
    beta = snap_scale(beta, config.patch);
    const auto hr_h = static_cast<std::int64_t>(std::ceil(alpha * config.patch - 1e-9));
    const auto hr_w = static_cast<std::int64_t>(std::ceil(beta * config.patch - 1e-9));

    const AugmentDraw draw = config.augment ? draw_augment(gen) : AugmentDraw{};
    std::vector<TrainingSample> batch;
    for (std::int64_t b = 0; b < config.batch_size; ++b) {
      const auto& clip = clips[torch::randint(0, static_cast<std::int64_t>(clips.size()), {1}, gen)
                                   .item<std::int64_t>()];
      const auto t0 = torch::randint(0, clip.size(0) - config.frames + 1, {1}, gen).item<std::int64_t>();
      const auto y0 = torch::randint(0, clip.size(2) - hr_h + 1, {1}, gen).item<std::int64_t>();
      const auto x0 = torch::randint(0, clip.size(3) - hr_w + 1, {1}, gen).item<std::int64_t>();
      auto hr = clip.slice(0, t0, t0 + config.frames).slice(2, y0, y0 + hr_h).slice(3, x0, x0 + hr_w);
      auto sample = make_training_sample(hr.to(dtype), config.patch, alpha, beta, config.crops, gen);
      batch.push_back(draw.identity() ? std::move(sample) : augment(sample, draw));
    }

    std::vector<torch::Tensor> lrs;
    for (const auto& s : batch) lrs.push_back(s.lr);
    const ScaleSpec spec(batch.front().alpha, batch.front().beta, config.patch, config.patch);
    auto out = model.forward(torch::stack(lrs, 0), spec, BankMode::kDifferentiable);

    std::vector<torch::Tensor> preds;
    std::vector<torch::Tensor> gts;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (std::size_t k = 0; k < batch[b].gt.size(); ++k) {
        const auto [row, col] = batch[b].offsets[k];
        preds.push_back(out[static_cast<std::int64_t>(b)]
                            .slice(2, row, row + config.patch)
                            .slice(3, col, col + config.patch));
        gts.push_back(batch[b].gt[k]);
      }
    }
    auto loss = charbonnier_loss(torch::stack(preds), torch::stack(gts), config.epsilon);

    optimizer.zero_grad();
    loss.backward();
    const double loss_value = loss.item<double>();
    const double gnorm = grad_norm(params);
    if (!std::isfinite(loss_value) || !std::isfinite(gnorm)) {
      throw TrainingAborted(diagnostics(step, lr, loss_value, gnorm));
    }
    optimizer.step();

    ++result.steps;
    if (step % config.log_every == 0 || step + 1 == config.iterations) {
      LossRecord rec{step, lr, loss_value};
      result.curve.push_back(rec);
      if (hooks.on_log) hooks.on_log(rec);
    }
    if (!hooks.checkpoint_path.empty() && config.checkpoint_every > 0 &&
        (step + 1) % config.checkpoint_every == 0) {
      save_checkpoint(model, hooks.checkpoint_path, step + 1);
    }
  }
  if (!hooks.checkpoint_path.empty()) save_checkpoint(model, hooks.checkpoint_path, result.steps);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  model.eval();
  return result;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "step\tlr\tloss\n" << std::setprecision(10);
  for (const auto& r : curve) out << r.step << '\t' << r.lr << '\t' << r.loss << '\n';
}

}  // namespace avsr
