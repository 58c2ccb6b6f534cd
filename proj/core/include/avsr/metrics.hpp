#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "avsr/data.hpp"
#include "avsr/model.hpp"

namespace avsr {

/// PSNR with peak 1 over all elements; +inf when the inputs are identical.
double psnr(const torch::Tensor& pred, const torch::Tensor& gt);

/// Mean of per-frame PSNR for T x C x H x W clips (+inf if any frame is
/// exact).
double video_psnr(const torch::Tensor& pred, const torch::Tensor& gt);

/// BT.601 full-range luma of a 3 x H x W (or N x 3 x H x W) image.
torch::Tensor luma(const torch::Tensor& rgb);

/// Gaussian-window SSIM (11 taps, sigma 1.5, K1 = 0.01, K2 = 0.03, peak 1) on
/// luma, mean over the valid window positions. The window shrinks to the
/// largest odd size that fits images smaller than 11 pixels.
double ssim(const torch::Tensor& pred, const torch::Tensor& gt);

/// Mean of per-frame SSIM.
double video_ssim(const torch::Tensor& pred, const torch::Tensor& gt);

/// Row `row` of every frame stacked over time: T x C x H x W -> C x T x W.
torch::Tensor temporal_profile(const torch::Tensor& video, std::int64_t row);

struct VideoScore {
  std::string video;
  double alpha = 1;
  double beta = 1;
  double psnr = 0;
  double ssim = 0;
  double lpips = std::numeric_limits<double>::quiet_NaN();
  double seconds_per_frame = 0;
  bool ok = true;
  std::string error;
};

struct ScaleSummary {
  double alpha = 1;
  double beta = 1;
  double psnr = 0;
  double ssim = 0;
  std::size_t videos = 0;
};

struct MetricReport {
  std::string label;  // model variant or "bicubic"
  std::vector<VideoScore> scores;

  /// Means over successful videos per scale, scales in first-seen order.
  std::vector<ScaleSummary> summary() const;
  double mean_psnr() const;
  double mean_ssim() const;

  void write_tsv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

using LpipsHook = std::function<double(const torch::Tensor& pred, const torch::Tensor& gt)>;

struct EvalClip {
  std::string id;
  torch::Tensor hr;  // T x 3 x H x W
};

struct EvalOptions {
  std::vector<std::pair<double, double>> scales{{4.0, 4.0}};
  DegradeOptions degrade;
  bool precompute = true;
  LpipsHook lpips;  // optional perceptual score
};

/// Degrades every clip at every scale, super-resolves it and scores it against
/// the top-left floor(alpha h) x floor(beta w) region of the ground truth
/// (h, w the LR size). Failures are recorded per video.
MetricReport evaluate(AvsrModelImpl& model, const std::vector<EvalClip>& clips,
                      const EvalOptions& options, const std::string& label = "");

/// Same protocol with bicubic upsampling in place of the model.
MetricReport evaluate_bicubic(const std::vector<EvalClip>& clips, const EvalOptions& options);

/// Bicubic upsampling of T x 3 x h x w to floor(alpha h) x floor(beta w).
torch::Tensor bicubic_upscale(const torch::Tensor& lr, double alpha, double beta);

}  // namespace avsr
