#include "avsr/flow.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <limits>

#include "avsr/error.hpp"
#include "avsr/init.hpp"
#include "avsr/log.hpp"
#include "avsr/sampling.hpp"
#include "avsr/tensor_io.hpp"

namespace avsr {
namespace {

torch::Tensor batched(const torch::Tensor& t) { return t.dim() == 3 ? t.unsqueeze(0) : t; }

}  // namespace

FlowField::FlowField(torch::Tensor data) : data_(batched(data)) {
  require(data_.dim() == 4 && data_.size(1) == 2, "FlowField: expected N x 2 x H x W");
  require(torch::isfinite(data_).all().item<bool>(), "FlowField: non-finite flow values");
}

FlowField FlowField::zeros(std::int64_t n, std::int64_t h, std::int64_t w,
                           const torch::TensorOptions& options) {
  return FlowField(torch::zeros({n, 2, h, w}, options));
}

std::string to_string(FlowKind kind) {
  switch (kind) {
    case FlowKind::kZero: return "zero";
    case FlowKind::kTranslationOracle: return "translation";
    case FlowKind::kLearnedFrozen: return "learned";
  }
  return "?";
}

FlowKind parse_flow_kind(const std::string& name) {
  if (name == "zero") return FlowKind::kZero;
  if (name == "translation") return FlowKind::kTranslationOracle;
  if (name == "learned") return FlowKind::kLearnedFrozen;
  throw ConfigError("unknown flow provider '" + name + "' (zero, translation, learned)");
}

FlowField FlowProviderImpl::estimate(const torch::Tensor& target,
                                     const torch::Tensor& source) const {
  const auto t = batched(target);
  const auto s = batched(source);
  require(t.dim() == 4 && t.sizes() == s.sizes(),
          "estimate_flow: target and source dimensions differ");
  torch::NoGradGuard no_grad;
  return FlowField(compute(t.detach(), s.detach()));
}

torch::Tensor ZeroFlowImpl::compute(const torch::Tensor& target, const torch::Tensor&) const {
  return torch::zeros({target.size(0), 2, target.size(2), target.size(3)}, target.options());
}

TranslationOracleImpl::TranslationOracleImpl(int radius) : radius_(radius) {
  if (radius < 0) throw ConfigError("translation oracle radius must be >= 0");
}

torch::Tensor TranslationOracleImpl::compute(const torch::Tensor& target,
                                             const torch::Tensor& source) const {
  const auto n = target.size(0);
  const auto h = target.size(2);
  const auto w = target.size(3);
  const auto ry = std::min<std::int64_t>(radius_, h - 1);
  const auto rx = std::min<std::int64_t>(radius_, w - 1);

  auto flow = torch::zeros({n, 2, h, w}, target.options());
  for (std::int64_t b = 0; b < n; ++b) {
    const auto tgt = target[b];
    const auto src = source[b];
    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_dx = 0;
    std::int64_t best_dy = 0;
    // Search in order of increasing |d| so ties resolve towards small motion.
    for (std::int64_t mag = 0; mag <= std::max(rx, ry); ++mag) {
      for (std::int64_t dy = -std::min(mag, ry); dy <= std::min(mag, ry); ++dy) {
        for (std::int64_t dx = -std::min(mag, rx); dx <= std::min(mag, rx); ++dx) {
          if (std::max(std::abs(dx), std::abs(dy)) != mag) continue;
          // target(y, x) vs source(y + dy, x + dx) over the overlap.
          const auto y0 = std::max<std::int64_t>(0, -dy);
          const auto y1 = std::min(h, h - dy);
          const auto x0 = std::max<std::int64_t>(0, -dx);
          const auto x1 = std::min(w, w - dx);
          const auto a = tgt.slice(1, y0, y1).slice(2, x0, x1);
          const auto s = src.slice(1, y0 + dy, y1 + dy).slice(2, x0 + dx, x1 + dx);
          const double cost = (a - s).abs().mean().item<double>();
          if (cost < best) {
            best = cost;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
    }
    flow[b][0].fill_(static_cast<double>(best_dx));
    flow[b][1].fill_(static_cast<double>(best_dy));
  }
  return flow;
}

LearnedFlowImpl::LearnedFlowImpl(std::uint64_t seed,
                                 const std::optional<std::filesystem::path>& weights) {
  namespace nn = torch::nn;
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(6, 16, 3).stride(2).padding(1)));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(16, 16, 3).stride(2).padding(1)));
  conv3_ = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(16, 2, 3).padding(1)));
  seeded_reinit(*this, seed);

  if (weights) {
    if (std::filesystem::exists(*weights)) {
      const auto archive = read_archive(*weights, "AVSRWGTS", 1);
      assign_named(*this, archive.tensors);
      pretrained_ = true;
      log_info("flow: loaded external weights from " + weights->string());
    } else {
      log_warn("flow: weights file " + weights->string() +
               " not found, using seeded stand-in (seed " + std::to_string(seed) + ")");
    }
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
}

torch::Tensor LearnedFlowImpl::raw(const torch::Tensor& a, const torch::Tensor& b) const {
  namespace F = torch::nn::functional;
  auto x = torch::cat({a, b}, 1);
  x = F::leaky_relu(conv1_->forward(x), F::LeakyReLUFuncOptions().negative_slope(0.1));
  x = F::leaky_relu(conv2_->forward(x), F::LeakyReLUFuncOptions().negative_slope(0.1));
  return conv3_->forward(x);
}

torch::Tensor LearnedFlowImpl::compute(const torch::Tensor& target,
                                       const torch::Tensor& source) const {
  namespace F = torch::nn::functional;
  const auto h = target.size(2);
  const auto w = target.size(3);
  const auto pad_h = (kStride - h % kStride) % kStride;
  const auto pad_w = (kStride - w % kStride) % kStride;

  auto pad = [&](const torch::Tensor& x) {
    if (pad_h == 0 && pad_w == 0) return x;
    F::PadFuncOptions::mode_t mode = torch::kReflect;
    if (pad_h >= h || pad_w >= w) mode = torch::kReplicate;
    return F::pad(x, F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(mode));
  };
  const auto t = pad(target);
  const auto s = pad(source);

  auto coarse = torch::tanh(raw(t, s) - raw(s, t));
  auto full = F::interpolate(coarse, F::InterpolateFuncOptions()
                                         .size(std::vector<std::int64_t>{t.size(2), t.size(3)})
                                         .mode(torch::kBilinear)
                                         .align_corners(false));
  full = full * static_cast<double>(kStride);
  return full.slice(2, 0, h).slice(3, 0, w).contiguous();
}

FlowProvider make_flow_provider(FlowKind kind, std::uint64_t seed,
                                const std::optional<std::filesystem::path>& weights) {
  switch (kind) {
    case FlowKind::kZero: return std::make_shared<ZeroFlowImpl>();
    case FlowKind::kTranslationOracle: return std::make_shared<TranslationOracleImpl>();
    case FlowKind::kLearnedFrozen: return std::make_shared<LearnedFlowImpl>(seed, weights);
  }
  throw ConfigError("unknown flow kind");
}

torch::Tensor warp(const torch::Tensor& features, const torch::Tensor& flow) {
  const auto x = batched(features);
  require(x.dim() == 4, "warp: features must be N x C x H x W");
  require(flow.dim() == 4 && flow.size(1) == 2, "warp: flow must be N x 2 x H x W");
  require(flow.size(0) == x.size(0) && flow.size(2) == x.size(2) && flow.size(3) == x.size(3),
          "warp: flow dimensions do not match features");
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto opts = flow.options();
  const auto gx = torch::arange(w, opts).view({1, 1, w});
  const auto gy = torch::arange(h, opts).view({1, h, 1});
  const auto fl = flow.to(x.scalar_type());
  auto out = bilinear_sample(x, (gx + fl.select(1, 0)).to(x.scalar_type()),
                             (gy + fl.select(1, 1)).to(x.scalar_type()), Padding::kZeros);
  return features.dim() == 3 ? out.squeeze(0) : out;
}

torch::Tensor warp(const torch::Tensor& features, const FlowField& flow) {
  return warp(features, flow.tensor());
}

}  // namespace avsr
