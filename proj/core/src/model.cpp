#include "avsr/model.hpp"

#include <algorithm>
#include <map>

#include "avsr/error.hpp"
#include "avsr/init.hpp"
#include "avsr/tensor_io.hpp"

namespace avsr {

namespace {

// splitmix64 step: independent sub-seeds for every component.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::optional<std::filesystem::path> optional_path(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return std::filesystem::path(path);
}

// Splits an (n * count) batch back into `count` chunks of n.
std::vector<torch::Tensor> unbatch(const torch::Tensor& x, std::int64_t n) {
  return x.split(n, 0);
}

}  // namespace

AvsrModelImpl::AvsrModelImpl(const ModelConfig& config, std::shared_ptr<KernelCache> cache)
    : config_(config), cache_(cache ? std::move(cache) : std::make_shared<KernelCache>()) {
  config_.validate();
  const auto seed = config_.seed;
  const auto c = config_.channels;

  flow_ = make_flow_provider(config_.flow, derive_seed(seed, 0), optional_path(config_.flow_weights));
  register_module("flow", flow_);

  if (config_.effective_prior() != PriorKind::kNone) {
    auto pyramid = std::make_shared<FeaturePyramidImpl>(config_.effective_prior(), config_.prior_widths,
                                                        derive_seed(seed, 1),
                                                        optional_path(config_.prior_weights));
    prior_ = register_module("prior", PriorExtractor(pyramid, c));
    seeded_reinit(*prior_->projection(), derive_seed(seed, 2));
  }

  recurrent_ = register_module("recurrent",
                               RecurrentUnit(config_.input_channels(), c, config_.recurrent_blocks));
  seeded_reinit(*recurrent_, derive_seed(seed, 3));

  attention_ = register_module("attention", CrossAttentionUnit(config_.attention_options()));
  seeded_reinit(*attention_, derive_seed(seed, 4));
  attention_->zero_offset_output();

  hyperup_ = register_module("hyperup", HyperUpsampler(c, config_.kernel, config_.mlp_hidden,
                                                       config_.octaves));
  seeded_reinit(*hyperup_, derive_seed(seed, 5));
  auto gen = make_generator(derive_seed(seed, 6));
  hyperup_->mlp()->reset_parameters(gen);
}

std::int64_t AvsrModelImpl::window_at(std::int64_t c, std::int64_t frames) const {
  return std::max<std::int64_t>(0, std::min(config_.effective_window(), frames - 1 - c));
}

FlowPlan AvsrModelImpl::plan_flows(const torch::Tensor& video) const {
  require(video.dim() == 5 && video.size(2) == 3, "plan_flows: expected N x T x 3 x H x W");
  const auto n = video.size(0);
  const auto frames = video.size(1);
  const auto h = video.size(3);
  const auto w = video.size(4);

  // target frames [0, T - t) against source frames [t, T), one provider call per offset.
  auto pairs = [&](std::int64_t t, bool forward) {
    auto early = video.slice(1, 0, frames - t);
    auto late = video.slice(1, t, frames);
    auto target = (forward ? early : late).flatten(0, 1);
    auto source = (forward ? late : early).flatten(0, 1);
    auto flow = flow_->estimate(target, source).tensor().view({n, frames - t, 2, h, w});
    std::vector<FlowField> out;
    for (std::int64_t i = 0; i < frames - t; ++i) out.emplace_back(flow.select(1, i));
    return out;
  };

  FlowPlan plan;
  plan.backward.push_back(FlowField::zeros(n, h, w, video.options()));
  if (frames > 1) {
    for (auto& f : pairs(1, false)) plan.backward.push_back(std::move(f));
  }
  const auto reach = std::min(config_.effective_window(), frames - 1);
  for (std::int64_t t = 1; t <= reach; ++t) plan.future.push_back(pairs(t, true));
  return plan;
}

torch::Tensor AvsrModelImpl::inputs_for(const torch::Tensor& video) {
  require(video.dim() == 5 && video.size(2) == 3, "inputs_for: expected N x T x 3 x H x W");
  if (!prior_) return video;
  auto p = prior_->forward(video.flatten(0, 1));
  return p.view({video.size(0), video.size(1), p.size(1), video.size(3), video.size(4)});
}

std::vector<torch::Tensor> AvsrModelImpl::refine_all(const std::vector<torch::Tensor>& hidden,
                                                     const torch::Tensor& inputs,
                                                     const FlowPlan& flows) {
  const auto frames = static_cast<std::int64_t>(hidden.size());
  const auto n = hidden.front().size(0);

  // aligned[t - 1][c] = h_{c+t} aligned onto frame c, batched over c per offset.
  std::vector<std::vector<torch::Tensor>> aligned;
  for (std::int64_t t = 1; t <= static_cast<std::int64_t>(flows.future.size()); ++t) {
    std::vector<torch::Tensor> current, future, flow;
    for (std::int64_t c = 0; c + t < frames; ++c) {
      current.push_back(hidden[c]);
      future.push_back(hidden[c + t]);
      flow.push_back(flows.future[t - 1][c].tensor());
    }
    auto out = attention_->rectify_and_align(torch::cat(current, 0), torch::cat(future, 0),
                                             FlowField(torch::cat(flow, 0)), t);
    aligned.push_back(unbatch(out, n));
  }

  // Anchors sharing a window length run as one batch.
  std::map<std::int64_t, std::vector<std::int64_t>> groups;
  for (std::int64_t c = 0; c < frames; ++c) groups[window_at(c, frames)].push_back(c);

  std::vector<torch::Tensor> refined(frames);
  for (const auto& [w, anchors] : groups) {
    std::vector<torch::Tensor> current, input;
    for (auto c : anchors) {
      current.push_back(hidden[c]);
      input.push_back(inputs.select(1, c));
    }
    std::vector<torch::Tensor> window;
    for (std::int64_t t = 1; t <= w; ++t) {
      std::vector<torch::Tensor> parts;
      for (auto c : anchors) parts.push_back(aligned[t - 1][c]);
      window.push_back(torch::cat(parts, 0));
    }
    auto g = unbatch(attention_->forward(torch::cat(current, 0), window, torch::cat(input, 0)), n);
    for (std::size_t i = 0; i < anchors.size(); ++i) refined[anchors[i]] = g[i];
  }
  return refined;
}

std::shared_ptr<const KernelBank> AvsrModelImpl::precompute(const ScaleSpec& spec) {
  return cache_->get_or_compute(*hyperup_->mlp(), spec, config_.kernel);
}

torch::Tensor AvsrModelImpl::forward_with_inputs(const torch::Tensor& video,
                                                 const torch::Tensor& inputs,
                                                 const ScaleSpec& spec, BankMode mode) {
  require(video.dim() == 5 && video.size(2) == 3, "forward: expected N x T x 3 x H x W");
  require(video.size(1) >= 1, "forward: empty video");
  require(video.size(3) == spec.in_h() && video.size(4) == spec.in_w(),
          "forward: frame size does not match the scale spec");
  require(inputs.dim() == 5 && inputs.size(0) == video.size(0) && inputs.size(1) == video.size(1) &&
              inputs.size(3) == video.size(3) && inputs.size(4) == video.size(4),
          "forward: inputs do not match the video");
  if (inputs.size(2) != config_.input_channels()) {
    throw ConfigError("forward: expected " + std::to_string(config_.input_channels()) +
                      " input channels, got " + std::to_string(inputs.size(2)));
  }

  const auto flows = plan_flows(video);
  auto hidden = recurrent_->propagate(inputs, flows.backward);
  auto refined = refine_all(hidden, inputs, flows);

  std::shared_ptr<const KernelBank> shared;
  KernelBank owned;
  if (mode == BankMode::kCached) {
    shared = precompute(spec);
  } else if (mode == BankMode::kDifferentiable) {
    owned = predict_kernels(*hyperup_->mlp(), spec, config_.kernel);
  }

  std::vector<torch::Tensor> frames;
  for (std::int64_t c = 0; c < video.size(1); ++c) {
    const KernelBank* bank = mode == BankMode::kCached ? shared.get() : &owned;
    if (mode == BankMode::kPerFrame) {
      torch::NoGradGuard no_grad;
      owned = predict_kernels(*hyperup_->mlp(), spec, config_.kernel);
    }
    frames.push_back(hyperup_->forward(refined[c], hidden[c], video.select(1, c), *bank, spec));
  }
  return torch::stack(frames, 1);
}

torch::Tensor AvsrModelImpl::forward(const torch::Tensor& video, const ScaleSpec& spec,
                                     BankMode mode) {
  require(video.dim() == 5 && video.size(2) == 3, "forward: expected N x T x 3 x H x W");
  return forward_with_inputs(video, inputs_for(video), spec, mode);
}

torch::Tensor AvsrModelImpl::super_resolve(const torch::Tensor& video, double alpha, double beta,
                                           bool precompute) {
  require(video.dim() == 4 && video.size(1) == 3, "super_resolve: expected T x 3 x H x W");
  require(video.size(0) >= 1, "super_resolve: empty video");
  const ScaleSpec spec(alpha, beta, video.size(2), video.size(3));
  torch::NoGradGuard no_grad;
  return forward(video.unsqueeze(0), spec, precompute ? BankMode::kCached : BankMode::kPerFrame)
      .squeeze(0);
}

std::vector<torch::Tensor> AvsrModelImpl::trainable_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& p : parameters()) {
    if (p.requires_grad()) out.push_back(p);
  }
  return out;
}

std::uint64_t AvsrModelImpl::frozen_checksum() const {
  NamedTensors frozen;
  for (const auto& [name, t] : collect_named(*this)) {
    if (name.rfind("flow.", 0) == 0 || name.rfind("prior.pyramid.", 0) == 0) frozen.emplace(name, t);
  }
  return checksum(frozen);
}

AvsrModel build_variant(const ModelConfig& config, std::shared_ptr<KernelCache> cache) {
  return AvsrModel(config, std::move(cache));
}

}  // namespace avsr
