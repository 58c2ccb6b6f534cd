#include "avsr/prior.hpp"

#include <cmath>

#include "avsr/error.hpp"
#include "avsr/init.hpp"
#include "avsr/layers.hpp"
#include "avsr/log.hpp"
#include "avsr/tensor_io.hpp"

namespace avsr {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::kNone: return "none";
    case PriorKind::kSeededPyramid: return "seeded";
    case PriorKind::kPretrainedVgg: return "vgg";
  }
  return "?";
}

PriorKind parse_prior_kind(const std::string& name) {
  if (name == "none") return PriorKind::kNone;
  if (name == "seeded") return PriorKind::kSeededPyramid;
  if (name == "vgg") return PriorKind::kPretrainedVgg;
  throw ConfigError("unknown prior provider '" + name + "' (none, seeded, vgg)");
}

FeaturePyramidImpl::FeaturePyramidImpl(PriorKind kind, std::vector<std::int64_t> widths,
                                       std::uint64_t seed,
                                       const std::optional<std::filesystem::path>& weights)
    : kind_(kind), widths_(std::move(widths)) {
  if (kind == PriorKind::kNone) throw ConfigError("feature pyramid requires a prior kind");
  if (widths_.empty()) throw ConfigError("feature pyramid needs at least one stage");

  const std::vector<int> vgg16_convs{2, 2, 3, 3, 3};
  std::int64_t in = 3;
  auto gen = make_generator(seed);
  for (std::size_t s = 0; s < widths_.size(); ++s) {
    nn::Sequential block;
    if (s > 0) block->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).ceil_mode(true)));
    const int convs = kind == PriorKind::kPretrainedVgg && s < vgg16_convs.size() ? vgg16_convs[s] : 1;
    for (int i = 0; i < convs; ++i) {
      auto conv = nn::Conv2d(nn::Conv2dOptions(in, widths_[s], 3).padding(1));
      const double bound = std::sqrt(6.0 / static_cast<double>(in * 9));
      uniform_(conv->weight, bound, gen);
      {
        torch::NoGradGuard no_grad;
        conv->bias.zero_();
      }
      block->push_back(conv);
      block->push_back(nn::ReLU());
      in = widths_[s];
    }
    blocks_.push_back(register_module("stage" + std::to_string(s), block));
  }

  if (kind == PriorKind::kPretrainedVgg) {
    mean_ = register_buffer("mean", torch::tensor({0.485, 0.456, 0.406}).view({1, 3, 1, 1}));
    std_ = register_buffer("std", torch::tensor({0.229, 0.224, 0.225}).view({1, 3, 1, 1}));
    if (weights && std::filesystem::exists(*weights)) {
      assign_named(*this, read_archive(*weights, "AVSRWGTS", 1).tensors);
      pretrained_ = true;
      log_info("prior: pretrained VGG weights loaded from " + weights->string());
    } else {
      log_warn("prior: no pretrained VGG weights" +
               (weights ? " at " + weights->string() : std::string()) +
               ", using seeded stand-in (seed " + std::to_string(seed) + ")");
    }
  } else {
    mean_ = register_buffer("mean", torch::zeros({1, 3, 1, 1}));
    std_ = register_buffer("std", torch::ones({1, 3, 1, 1}));
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
}

std::vector<torch::Tensor> FeaturePyramidImpl::stages(const torch::Tensor& frames) const {
  require(frames.dim() == 4 && frames.size(1) == 3, "feature pyramid: expected N x 3 x H x W");
  torch::NoGradGuard no_grad;
  auto x = (frames.detach() - mean_.to(frames.scalar_type())) / std_.to(frames.scalar_type());
  std::vector<torch::Tensor> out;
  for (auto& block : blocks_) {
    x = block->forward(x);
    out.push_back(x);
  }
  return out;
}

std::vector<PyramidStage> FeaturePyramidImpl::signature() const {
  std::vector<PyramidStage> sig;
  for (std::size_t s = 0; s < widths_.size(); ++s) {
    sig.push_back({widths_[s], std::int64_t{1} << s});
  }
  return sig;
}

std::int64_t FeaturePyramidImpl::total_channels() const {
  std::int64_t total = 0;
  for (auto w : widths_) total += w;
  return total;
}

std::int64_t FeaturePyramidImpl::deepest_stride() const {
  return std::int64_t{1} << (widths_.size() - 1);
}

PriorExtractorImpl::PriorExtractorImpl(FeaturePyramid pyramid, std::int64_t channels)
    : channels_(channels), pyramid_(std::move(pyramid)) {
  if (!pyramid_) throw ConfigError("prior extractor needs a feature pyramid");
  register_module("pyramid", pyramid_);
  projection_ = register_module("projection", conv1x1(pyramid_->total_channels(), channels));
}

torch::Tensor PriorExtractorImpl::fused_stages(const torch::Tensor& frames) const {
  require(frames.dim() == 4 && frames.size(1) == 3, "extract_prior: expected N x 3 x H x W");
  const auto h = frames.size(2);
  const auto w = frames.size(3);
  const auto stride = pyramid_->deepest_stride();
  if (h < stride || w < stride) {
    throw InvalidInput("extract_prior: frame " + std::to_string(h) + "x" + std::to_string(w) +
                       " is smaller than the minimum size " + std::to_string(stride) + "x" +
                       std::to_string(stride));
  }
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> maps;
  for (auto& map : pyramid_->stages(frames)) {
    if (map.size(2) == h && map.size(3) == w) {
      maps.push_back(map);
    } else {
      maps.push_back(F::interpolate(map, F::InterpolateFuncOptions()
                                             .size(std::vector<std::int64_t>{h, w})
                                             .mode(torch::kBilinear)
                                             .align_corners(false)));
    }
  }
  return torch::cat(maps, 1);
}

torch::Tensor PriorExtractorImpl::forward(const torch::Tensor& frames) {
  return torch::cat({projection_->forward(fused_stages(frames)), frames}, 1);
}

}  // namespace avsr
