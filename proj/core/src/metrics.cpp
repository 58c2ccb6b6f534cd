#include "avsr/metrics.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "avsr/error.hpp"
#include "avsr/sampling.hpp"

namespace avsr {

namespace F = torch::nn::functional;

double psnr(const torch::Tensor& pred, const torch::Tensor& gt) {
  require(pred.sizes() == gt.sizes(), "psnr: shape mismatch");
  const double mse = (pred.to(torch::kFloat64) - gt.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double video_psnr(const torch::Tensor& pred, const torch::Tensor& gt) {
  require(pred.dim() == 4 && pred.sizes() == gt.sizes(), "video_psnr: expected matching T x C x H x W");
  double total = 0.0;
  for (std::int64_t t = 0; t < pred.size(0); ++t) total += psnr(pred[t], gt[t]);
  return total / static_cast<double>(pred.size(0));
}

torch::Tensor luma(const torch::Tensor& rgb) {
  require(rgb.dim() >= 3 && rgb.size(-3) == 3, "luma: expected 3 channels");
  auto x = rgb.to(torch::kFloat64);
  return 0.299 * x.select(-3, 0) + 0.587 * x.select(-3, 1) + 0.114 * x.select(-3, 2);
}

double ssim(const torch::Tensor& pred, const torch::Tensor& gt) {
  require(pred.sizes() == gt.sizes(), "ssim: shape mismatch");
  require(pred.dim() == 3, "ssim: expected C x H x W");
  auto a = pred.size(0) == 3 ? luma(pred) : pred.to(torch::kFloat64).mean(0);
  auto b = gt.size(0) == 3 ? luma(gt) : gt.to(torch::kFloat64).mean(0);
  const auto h = a.size(0);
  const auto w = a.size(1);
  std::int64_t size = std::min<std::int64_t>({11, h, w});
  if (size % 2 == 0) --size;

  auto taps = torch::arange(size, torch::kFloat64) - static_cast<double>(size / 2);
  auto g = torch::exp(-(taps * taps) / (2.0 * 1.5 * 1.5));
  g = g / g.sum();
  auto window = torch::outer(g, g).view({1, 1, size, size});

  auto filt = [&](const torch::Tensor& x) { return F::conv2d(x.view({1, 1, h, w}), window); };
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  auto mu_a = filt(a);
  auto mu_b = filt(b);
  auto var_a = filt(a * a) - mu_a * mu_a;
  auto var_b = filt(b * b) - mu_b * mu_b;
  auto cov = filt(a * b) - mu_a * mu_b;
  auto map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean().item<double>();
}

double video_ssim(const torch::Tensor& pred, const torch::Tensor& gt) {
  require(pred.dim() == 4 && pred.sizes() == gt.sizes(), "video_ssim: expected matching T x C x H x W");
  double total = 0.0;
  for (std::int64_t t = 0; t < pred.size(0); ++t) total += ssim(pred[t], gt[t]);
  return total / static_cast<double>(pred.size(0));
}

torch::Tensor temporal_profile(const torch::Tensor& video, std::int64_t row) {
  require(video.dim() == 4, "temporal_profile: expected T x C x H x W");
  if (row < 0 || row >= video.size(2)) {
    throw InvalidInput("temporal_profile: row " + std::to_string(row) + " outside 0.." +
                       std::to_string(video.size(2) - 1));
  }
  return video.select(2, row).transpose(0, 1).contiguous();
}

std::vector<ScaleSummary> MetricReport::summary() const {
  std::vector<ScaleSummary> out;
  for (const auto& s : scores) {
    if (!s.ok) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const ScaleSummary& x) {
      return x.alpha == s.alpha && x.beta == s.beta;
    });
    if (it == out.end()) {
      out.push_back({s.alpha, s.beta, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    it->psnr += s.psnr;
    it->ssim += s.ssim;
    ++it->videos;
  }
  for (auto& x : out) {
    x.psnr /= static_cast<double>(x.videos);
    x.ssim /= static_cast<double>(x.videos);
  }
  return out;
}

double MetricReport::mean_psnr() const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : scores) {
    if (s.ok) {
      total += s.psnr;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(n);
}

double MetricReport::mean_ssim() const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : scores) {
    if (s.ok) {
      total += s.ssim;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(n);
}

namespace {

std::string scale_label(double alpha, double beta) {
  std::ostringstream os;
  os << "x" << alpha;
  if (beta != alpha) os << "/" << beta;
  return os.str();
}

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

void MetricReport::write_tsv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "label\tvideo\tscale\talpha\tbeta\tpsnr\tssim\tlpips\tsec_per_frame\tstatus\n";
  for (const auto& s : scores) {
    out << label << '\t' << s.video << '\t' << scale_label(s.alpha, s.beta) << '\t' << s.alpha
        << '\t' << s.beta << '\t' << number(s.psnr) << '\t' << number(s.ssim) << '\t'
        << number(s.lpips) << '\t' << number(s.seconds_per_frame) << '\t'
        << (s.ok ? "ok" : "failed: " + s.error) << '\n';
  }
  for (const auto& m : summary()) {
    out << label << "\tmean\t" << scale_label(m.alpha, m.beta) << '\t' << m.alpha << '\t' << m.beta
        << '\t' << number(m.psnr) << '\t' << number(m.ssim) << "\tnan\tnan\tok\n";
  }
}

void MetricReport::write_json(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json j;
  j["label"] = label;
  j["videos"] = nlohmann::json::array();
  for (const auto& s : scores) {
    nlohmann::json v{{"video", s.video},
                     {"alpha", s.alpha},
                     {"beta", s.beta},
                     {"psnr", json_number(s.psnr)},
                     {"psnr_infinite", std::isinf(s.psnr)},
                     {"ssim", json_number(s.ssim)},
                     {"lpips", json_number(s.lpips)},
                     {"seconds_per_frame", json_number(s.seconds_per_frame)},
                     {"ok", s.ok}};
    if (!s.ok) v["error"] = s.error;
    j["videos"].push_back(v);
  }
  j["summary"] = nlohmann::json::array();
  for (const auto& m : summary()) {
    j["summary"].push_back({{"alpha", m.alpha},
                            {"beta", m.beta},
                            {"psnr", json_number(m.psnr)},
                            {"ssim", json_number(m.ssim)},
                            {"videos", m.videos}});
  }
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

torch::Tensor bicubic_upscale(const torch::Tensor& lr, double alpha, double beta) {
  return bicubic_resize(lr, scaled_size(lr.size(-2), alpha), scaled_size(lr.size(-1), beta),
                        1.0 / alpha, 1.0 / beta);
}

namespace {

template <typename Upscaler>
MetricReport run_protocol(const std::vector<EvalClip>& clips, const EvalOptions& options,
                          const std::string& label, Upscaler&& upscale) {
  MetricReport report;
  report.label = label;
  for (const auto& [alpha, beta] : options.scales) {
    for (const auto& clip : clips) {
      VideoScore score;
      score.video = clip.id;
      score.alpha = alpha;
      score.beta = beta;
      try {
        auto lr = degrade(clip.hr, alpha, beta, options.degrade);
        const auto start = std::chrono::steady_clock::now();
        auto sr = upscale(lr, alpha, beta);
        const auto stop = std::chrono::steady_clock::now();
        score.seconds_per_frame =
            std::chrono::duration<double>(stop - start).count() / static_cast<double>(lr.size(0));
        if (sr.size(2) > clip.hr.size(2) || sr.size(3) > clip.hr.size(3) || sr.size(0) != clip.hr.size(0)) {
          throw InvalidInput("output " + std::to_string(sr.size(2)) + "x" + std::to_string(sr.size(3)) +
                             " does not fit the ground truth " + std::to_string(clip.hr.size(2)) + "x" +
                             std::to_string(clip.hr.size(3)));
        }
        auto gt = clip.hr.slice(2, 0, sr.size(2)).slice(3, 0, sr.size(3));
        sr = sr.clamp(0.0, 1.0);
        score.psnr = video_psnr(sr, gt);
        score.ssim = video_ssim(sr, gt);
        if (options.lpips) score.lpips = options.lpips(sr, gt);
      } catch (const Error& e) {
        score.ok = false;
        score.error = e.what();
      }
      report.scores.push_back(score);
    }
  }
  return report;
}

}  // namespace

MetricReport evaluate(AvsrModelImpl& model, const std::vector<EvalClip>& clips,
                      const EvalOptions& options, const std::string& label) {
  model.eval();
  return run_protocol(clips, options, label.empty() ? to_string(model.config().variant) : label,
                      [&](const torch::Tensor& lr, double a, double b) {
                        return model.super_resolve(lr, a, b, options.precompute);
                      });
}

MetricReport evaluate_bicubic(const std::vector<EvalClip>& clips, const EvalOptions& options) {
  return run_protocol(clips, options, "bicubic", [](const torch::Tensor& lr, double a, double b) {
    return bicubic_upscale(lr, a, b);
  });
}

}  // namespace avsr
