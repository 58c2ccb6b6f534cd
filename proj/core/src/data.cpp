#include "avsr/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "avsr/error.hpp"
#include "avsr/image_io.hpp"
#include "avsr/init.hpp"
#include "avsr/sampling.hpp"

namespace avsr {

namespace {

double uniform(at::Generator& gen, double lo, double hi) {
  return lo + (hi - lo) * torch::rand({1}, gen, torch::kFloat64).item<double>();
}

std::int64_t floor_div_size(std::int64_t size, double scale) {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(size) / scale + 1e-9));
}

// Wraps to [-0.5, 0.5).
torch::Tensor wrap_half(const torch::Tensor& x) { return x - torch::floor(x + 0.5); }

}  // namespace

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

torch::Tensor bicubic_matrix(std::int64_t in, std::int64_t out, double scale) {
  require(in > 0 && out > 0 && scale > 0, "bicubic_matrix: sizes and scale must be positive");
  const double support = scale >= 1.0 ? 2.0 * scale : 2.0;
  const double inv = scale >= 1.0 ? 1.0 / scale : 1.0;
  auto m = torch::zeros({out, in}, torch::kFloat64);
  auto acc = m.accessor<double, 2>();
  for (std::int64_t i = 0; i < out; ++i) {
    const double center = scale * (static_cast<double>(i) + 0.5);
    const auto lo = std::max<std::int64_t>(static_cast<std::int64_t>(center - support + 0.5), 0);
    const auto hi = std::min<std::int64_t>(static_cast<std::int64_t>(center + support + 0.5), in);
    double total = 0.0;
    for (auto j = lo; j < hi; ++j) {
      const double w = cubic_kernel((static_cast<double>(j) - center + 0.5) * inv);
      acc[i][j] = w;
      total += w;
    }
    if (total != 0.0) {
      for (auto j = lo; j < hi; ++j) acc[i][j] /= total;
    }
  }
  return m;
}

torch::Tensor bicubic_resize(const torch::Tensor& input, std::int64_t out_h, std::int64_t out_w,
                             double scale_y, double scale_x) {
  require(input.dim() >= 2, "bicubic_resize: need at least 2 dims");
  const auto h = input.size(-2);
  const auto w = input.size(-1);
  auto ry = bicubic_matrix(h, out_h, scale_y).to(input.options());
  auto rx = bicubic_matrix(w, out_w, scale_x).to(input.options());
  return torch::matmul(torch::matmul(ry, input), rx.t());
}

torch::Tensor bicubic_resize(const torch::Tensor& input, std::int64_t out_h, std::int64_t out_w) {
  return bicubic_resize(input, out_h, out_w,
                        static_cast<double>(input.size(-2)) / static_cast<double>(out_h),
                        static_cast<double>(input.size(-1)) / static_cast<double>(out_w));
}

std::string to_string(DegradeMode mode) {
  return mode == DegradeMode::kBicubic ? "bicubic" : "bicubic+noise";
}

DegradeMode parse_degrade_mode(const std::string& name) {
  if (name == "bicubic") return DegradeMode::kBicubic;
  if (name == "bicubic+noise") return DegradeMode::kBicubicNoise;
  throw ConfigError("unknown degradation '" + name + "' (bicubic, bicubic+noise)");
}

torch::Tensor degrade(const torch::Tensor& hr, double alpha, double beta,
                      const DegradeOptions& options) {
  require(hr.dim() == 4, "degrade: expected T x C x H x W");
  require(alpha >= 1.0 && beta >= 1.0, "degrade: scales must be >= 1");
  torch::Tensor lr;
  if (alpha == 1.0 && beta == 1.0) {
    lr = hr;
  } else {
    const auto out_h = floor_div_size(hr.size(2), alpha);
    const auto out_w = floor_div_size(hr.size(3), beta);
    if (out_h < kMinLowResSize || out_w < kMinLowResSize) {
      throw InvalidInput("degrade: low-resolution size " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " is below the minimum of " +
                         std::to_string(kMinLowResSize) + " pixels");
    }
    lr = bicubic_resize(hr, out_h, out_w, alpha, beta);
  }
  if (options.mode == DegradeMode::kBicubicNoise && options.noise_sigma > 0.0) {
    auto gen = make_generator(options.seed);
    auto noise = torch::randn(lr.sizes(), gen, lr.options()) * options.noise_sigma;
    lr = (lr + noise).clamp(0.0, 1.0);
  }
  return lr;
}

std::int64_t TrainingSample::out_h() const { return scaled_size(patch(), alpha); }
std::int64_t TrainingSample::out_w() const { return scaled_size(patch(), beta); }

torch::Tensor crop_coordinates(double alpha, double beta, std::int64_t row, std::int64_t col,
                               std::int64_t patch) {
  auto da = torch::empty({patch}, torch::kFloat64);
  auto db = torch::empty({patch}, torch::kFloat64);
  for (std::int64_t i = 0; i < patch; ++i) {
    da[i] = relative_coordinate(row + i, alpha);
    db[i] = relative_coordinate(col + i, beta);
  }
  return torch::stack({da.view({patch, 1}).expand({patch, patch}),
                       db.view({1, patch}).expand({patch, patch})})
      .to(torch::kFloat32)
      .contiguous();
}

TrainingSample make_training_sample(const torch::Tensor& hr_patch, std::int64_t patch,
                                    double alpha, double beta, std::int64_t n_crops,
                                    at::Generator& gen) {
  require(hr_patch.dim() == 4 && hr_patch.size(1) == 3, "make_training_sample: expected T x 3 x H x W");
  require(patch > 0 && n_crops > 0, "make_training_sample: patch and n_crops must be positive");
  require(alpha >= 1.0 && beta >= 1.0, "make_training_sample: scales must be >= 1");
  const auto out_h = scaled_size(patch, alpha);
  const auto out_w = scaled_size(patch, beta);
  if (hr_patch.size(2) < out_h || hr_patch.size(3) < out_w) {
    throw InvalidInput("make_training_sample: HR patch " + std::to_string(hr_patch.size(2)) + "x" +
                       std::to_string(hr_patch.size(3)) + " is smaller than the " +
                       std::to_string(out_h) + "x" + std::to_string(out_w) + " output grid");
  }
  TrainingSample s;
  s.alpha = alpha;
  s.beta = beta;
  s.lr = (alpha == 1.0 && beta == 1.0 && hr_patch.size(2) == patch && hr_patch.size(3) == patch)
             ? hr_patch.clone()
             : bicubic_resize(hr_patch, patch, patch, alpha, beta);
  for (std::int64_t k = 0; k < n_crops; ++k) {
    const auto row = torch::randint(0, out_h - patch + 1, {1}, gen).item<std::int64_t>();
    const auto col = torch::randint(0, out_w - patch + 1, {1}, gen).item<std::int64_t>();
    s.offsets.emplace_back(row, col);
    s.gt.push_back(hr_patch.slice(2, row, row + patch).slice(3, col, col + patch).clone());
    s.coords.push_back(crop_coordinates(alpha, beta, row, col, patch));
  }
  return s;
}

AugmentDraw draw_augment(at::Generator& gen) {
  auto d = torch::randint(0, 4, {3}, gen);
  AugmentDraw draw;
  draw.rotations = static_cast<int>(d[0].item<std::int64_t>());
  draw.flip_h = d[1].item<std::int64_t>() % 2 == 1;
  draw.flip_v = d[2].item<std::int64_t>() % 2 == 1;
  return draw;
}

namespace {

// Mirror along the last axis: columns reverse, delta_beta negates.
void mirror_columns(TrainingSample& s) {
  const auto span = s.out_w() - s.patch();
  s.lr = s.lr.flip({-1});
  for (std::size_t k = 0; k < s.gt.size(); ++k) {
    s.gt[k] = s.gt[k].flip({-1});
    auto c = s.coords[k].flip({-1}).clone();
    c[1] = wrap_half(-c[1]);
    s.coords[k] = c;
    s.offsets[k].second = span - s.offsets[k].second;
  }
}

void mirror_rows(TrainingSample& s) {
  const auto span = s.out_h() - s.patch();
  s.lr = s.lr.flip({-2});
  for (std::size_t k = 0; k < s.gt.size(); ++k) {
    s.gt[k] = s.gt[k].flip({-2});
    auto c = s.coords[k].flip({-2}).clone();
    c[0] = wrap_half(-c[0]);
    s.coords[k] = c;
    s.offsets[k].first = span - s.offsets[k].first;
  }
}

void transpose(TrainingSample& s) {
  s.lr = s.lr.transpose(-2, -1);
  for (std::size_t k = 0; k < s.gt.size(); ++k) {
    s.gt[k] = s.gt[k].transpose(-2, -1);
    s.coords[k] = s.coords[k].transpose(-2, -1).flip({0});
    std::swap(s.offsets[k].first, s.offsets[k].second);
  }
  std::swap(s.alpha, s.beta);
}

}  // namespace

TrainingSample augment(const TrainingSample& sample, const AugmentDraw& draw) {
  require(sample.lr.size(-1) == sample.lr.size(-2), "augment: patches must be square");
  TrainingSample s = sample;
  // Counter-clockwise quarter turn = transpose, then mirror rows.
  for (int r = 0; r < ((draw.rotations % 4) + 4) % 4; ++r) {
    transpose(s);
    mirror_rows(s);
  }
  if (draw.flip_h) mirror_columns(s);
  if (draw.flip_v) mirror_rows(s);
  s.lr = s.lr.contiguous();
  for (auto& g : s.gt) g = g.contiguous();
  for (auto& c : s.coords) c = c.contiguous();
  return s;
}

TrainingSample augment(const TrainingSample& sample, std::uint64_t seed) {
  auto gen = make_generator(seed);
  return augment(sample, draw_augment(gen));
}

double sample_scale(at::Generator& gen, double lo, double hi) {
  require(lo >= 1.0 && hi >= lo, "sample_scale: need 1 <= lo <= hi");
  return uniform(gen, lo, hi);
}

torch::Tensor synth_clip(const SynthOptions& o) {
  require(o.frames >= 1 && o.height >= 1 && o.width >= 1, "synth_clip: empty clip");
  auto gen = make_generator(o.seed);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto ys = (torch::arange(o.height, opts) + 0.5).view({o.height, 1});
  auto xs = (torch::arange(o.width, opts) + 0.5).view({1, o.width});
  const double two_pi = 2.0 * std::numbers::pi;

  // Gratings share one pan velocity; blobs move independently.
  const double pan_x = uniform(gen, -o.max_speed, o.max_speed);
  const double pan_y = uniform(gen, -o.max_speed, o.max_speed);
  const double grating_amp = o.gratings > 0 ? 0.22 / static_cast<double>(o.gratings) : 0.0;
  const double blob_amp = o.blobs > 0 ? 0.18 / static_cast<double>(o.blobs) : 0.0;

  struct Grating {
    double fx, fy, phase;
    double color[3];
  };
  struct Blob {
    double cx, cy, vx, vy, sigma, sign;
    double color[3];
  };
  std::vector<Grating> gratings;
  for (std::int64_t g = 0; g < o.gratings; ++g) {
    const double f = uniform(gen, 0.3, 1.0) * o.max_frequency;
    const double theta = uniform(gen, 0.0, std::numbers::pi);
    Grating gr{f * std::cos(theta), f * std::sin(theta), uniform(gen, 0.0, two_pi), {}};
    for (auto& c : gr.color) c = uniform(gen, 0.2, 1.0);
    gratings.push_back(gr);
  }
  std::vector<Blob> blobs;
  const double extent = static_cast<double>(std::min(o.height, o.width));
  for (std::int64_t b = 0; b < o.blobs; ++b) {
    Blob bl{uniform(gen, 0.0, static_cast<double>(o.width)),
            uniform(gen, 0.0, static_cast<double>(o.height)),
            uniform(gen, -o.max_speed, o.max_speed),
            uniform(gen, -o.max_speed, o.max_speed),
            uniform(gen, 0.06, 0.12) * extent,
            uniform(gen, 0.0, 1.0) < 0.5 ? -1.0 : 1.0,
            {}};
    for (auto& c : bl.color) c = uniform(gen, 0.2, 1.0);
    blobs.push_back(bl);
  }

  auto video = torch::full({o.frames, 3, o.height, o.width}, 0.5, opts);
  for (std::int64_t t = 0; t < o.frames; ++t) {
    const double td = static_cast<double>(t);
    for (const auto& gr : gratings) {
      auto wave = torch::sin(two_pi * (gr.fx * (xs - pan_x * td) + gr.fy * (ys - pan_y * td)) +
                             gr.phase);
      for (int c = 0; c < 3; ++c) video[t][c] += grating_amp * gr.color[c] * wave;
    }
    for (const auto& bl : blobs) {
      auto dx = xs - (bl.cx + bl.vx * td);
      auto dy = ys - (bl.cy + bl.vy * td);
      auto bump = torch::exp(-(dx * dx + dy * dy) / (2.0 * bl.sigma * bl.sigma));
      for (int c = 0; c < 3; ++c) video[t][c] += bl.sign * blob_amp * bl.color[c] * bump;
    }
  }
  return video.to(torch::kFloat32);
}

torch::Tensor static_clip(const torch::Tensor& frame, std::int64_t frames) {
  require(frame.dim() == 3 && frames >= 1, "static_clip: expected C x H x W and frames >= 1");
  return frame.unsqueeze(0).expand({frames, frame.size(0), frame.size(1), frame.size(2)}).clone();
}

torch::Tensor moving_bar_clip(std::int64_t frames, std::int64_t height, std::int64_t width,
                              std::int64_t bar_width, std::int64_t speed) {
  require(frames >= 1 && height >= 1 && width >= 1 && bar_width >= 1, "moving_bar_clip: bad size");
  auto video = torch::full({frames, 3, height, width}, 0.1f);
  for (std::int64_t t = 0; t < frames; ++t) {
    const auto start = t * speed;
    const auto lo = std::clamp<std::int64_t>(start, 0, width);
    const auto hi = std::clamp<std::int64_t>(start + bar_width, 0, width);
    if (hi > lo) video[t].slice(2, lo, hi).fill_(0.9f);
  }
  return video;
}

Dataset load_dataset(const std::filesystem::path& root) {
  const auto manifest = root / "manifest.txt";
  std::ifstream in(manifest);
  if (!in) throw ConfigError("dataset: cannot read " + manifest.string());
  Dataset ds;
  ds.root = root;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string split;
    std::string id;
    if (!(fields >> split) || split.front() == '#') continue;
    if (!(fields >> id)) {
      throw ConfigError(manifest.string() + ":" + std::to_string(lineno) + ": missing clip id");
    }
    ClipSource clip;
    clip.id = id;
    clip.dir = root / id;
    const auto frames = list_frames(clip.dir);
    if (frames.empty()) throw ConfigError("dataset: clip '" + id + "' has no frames");
    auto first = read_png(frames.front());
    clip.frames = static_cast<std::int64_t>(frames.size());
    clip.height = first.size(1);
    clip.width = first.size(2);
    if (split == "train") {
      ds.train.push_back(clip);
    } else if (split == "val") {
      ds.val.push_back(clip);
    } else {
      throw ConfigError(manifest.string() + ":" + std::to_string(lineno) + ": unknown split '" +
                        split + "' (train, val)");
    }
  }
  return ds;
}

torch::Tensor load_clip(const ClipSource& clip) { return read_video(clip.dir); }

Dataset write_synthetic_dataset(const std::filesystem::path& root, std::int64_t n_train,
                                std::int64_t n_val, const SynthOptions& options) {
  std::filesystem::create_directories(root);
  std::ofstream manifest(root / "manifest.txt");
  for (std::int64_t i = 0; i < n_train + n_val; ++i) {
    SynthOptions o = options;
    o.seed = options.seed + static_cast<std::uint64_t>(i);
    char id[32];
    std::snprintf(id, sizeof(id), "clip_%03lld", static_cast<long long>(i));
    write_video(root / id, synth_clip(o));
    manifest << (i < n_train ? "train " : "val ") << id << "\n";
  }
  manifest.close();
  return load_dataset(root);
}

}  // namespace avsr
