#include "avsr/hyperup.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "avsr/error.hpp"
#include "avsr/init.hpp"
#include "avsr/sampling.hpp"
#include "avsr/tensor_io.hpp"

namespace avsr {

ScaleSpec::ScaleSpec(double alpha, double beta, std::int64_t in_h, std::int64_t in_w)
    : alpha_(alpha), beta_(beta), in_h_(in_h), in_w_(in_w) {
  if (!(alpha >= 1.0) || !(beta >= 1.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw InvalidInput("scale factors must be finite and >= 1");
  }
  require(in_h > 0 && in_w > 0, "ScaleSpec: input size must be positive");
  out_h_ = scaled_size(in_h, alpha);
  out_w_ = scaled_size(in_w, beta);
}

namespace {

torch::Tensor offsets_for(std::int64_t count, double scale, const torch::TensorOptions& options) {
  std::vector<double> values(count);
  for (std::int64_t i = 0; i < count; ++i) values[i] = relative_coordinate(i, scale);
  return torch::tensor(values, torch::TensorOptions().dtype(torch::kFloat64))
      .to(c10::typeMetaToScalarType(options.dtype()));
}

}  // namespace

torch::Tensor ScaleSpec::row_offsets(const torch::TensorOptions& options) const {
  return offsets_for(out_h_, alpha_, options);
}

torch::Tensor ScaleSpec::col_offsets(const torch::TensorOptions& options) const {
  return offsets_for(out_w_, beta_, options);
}

torch::Tensor positional_encoding(const torch::Tensor& values, int octaves) {
  require(octaves >= 1, "positional_encoding: need at least one octave");
  auto freqs = torch::pow(2.0, torch::arange(octaves, values.options())) * std::numbers::pi;
  auto phase = values.unsqueeze(-1) * freqs;  // (..., n, F)
  auto pairs = torch::stack({torch::sin(phase), torch::cos(phase)}, -1);  // (..., n, F, 2)
  auto sizes = values.sizes().vec();
  sizes.back() *= 2 * octaves;
  return pairs.reshape(sizes);
}

double normalised_tap(std::int64_t k, std::int64_t kernel) {
  return (static_cast<double>(k) - static_cast<double>(kernel - 1) / 2.0) /
         static_cast<double>(kernel);
}

torch::Tensor encode_scale_inputs(const ScaleSpec& spec, std::int64_t row, std::int64_t col,
                                  std::int64_t k1, std::int64_t k2, std::int64_t kernel,
                                  int octaves) {
  require(0 <= k1 && k1 < kernel && 0 <= k2 && k2 < kernel, "encode_scale_inputs: tap out of range");
  require(0 <= row && row < spec.out_h() && 0 <= col && col < spec.out_w(),
          "encode_scale_inputs: pixel out of range");
  auto scalars = torch::tensor(
      {spec.alpha() / kScaleNormaliser, spec.beta() / kScaleNormaliser,
       relative_coordinate(row, spec.alpha()), relative_coordinate(col, spec.beta()),
       normalised_tap(k1, kernel), normalised_tap(k2, kernel)},
      torch::TensorOptions().dtype(torch::kFloat64));
  return positional_encoding(scalars, octaves);
}

HyperMLPImpl::HyperMLPImpl(std::vector<std::int64_t> hidden, int octaves)
    : octaves_(octaves), hidden_(std::move(hidden)) {
  if (hidden_.empty()) throw ConfigError("hyper MLP needs at least one hidden layer");
  layers_ = register_module("layers", torch::nn::ModuleList());
  std::int64_t in = input_width();
  for (auto width : hidden_) {
    layers_->push_back(torch::nn::Linear(in, width));
    in = width;
  }
  layers_->push_back(torch::nn::Linear(in, 1));
  auto gen = make_generator(0);
  reset_parameters(gen);
}

void HyperMLPImpl::reset_parameters(at::Generator& gen) {
  for (std::size_t i = 0; i < layers_->size(); ++i) {
    auto linear = layers_->ptr<torch::nn::LinearImpl>(i);
    const auto fan_in = static_cast<double>(linear->weight.size(1));
    const double bound = i == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / kOmega;
    uniform_(linear->weight, bound, gen);
    uniform_(linear->bias, 1.0 / std::sqrt(fan_in), gen);
  }
}

torch::Tensor HyperMLPImpl::forward(const torch::Tensor& encoded) {
  require(encoded.dim() == 2 && encoded.size(1) == input_width(),
          "hyper MLP: expected M x " + std::to_string(input_width()) + " input");
  evaluations_.fetch_add(static_cast<std::uint64_t>(encoded.size(0)));
  auto x = encoded;
  const auto last = layers_->size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    x = torch::sin(kOmega * layers_->ptr<torch::nn::LinearImpl>(i)->forward(x));
  }
  return layers_->ptr<torch::nn::LinearImpl>(last)->forward(x).squeeze(1);
}

std::uint64_t parameter_version(const HyperMLPImpl& mlp) { return checksum(collect_named(mlp)); }

KernelBank predict_kernels(HyperMLPImpl& mlp, const ScaleSpec& spec, std::int64_t kernel) {
  require(kernel >= 1 && kernel % 2 == 1, "predict_kernels: kernel must be odd");
  const auto options = mlp.parameters().front().options();
  const int octaves = mlp.octaves();
  const auto enc_width = 2 * octaves;
  const auto taps = kernel * kernel;
  const auto out_h = spec.out_h();
  const auto out_w = spec.out_w();

  auto scale = positional_encoding(
      torch::tensor({spec.alpha() / kScaleNormaliser, spec.beta() / kScaleNormaliser},
                    torch::TensorOptions().dtype(torch::kFloat64))
          .to(c10::typeMetaToScalarType(options.dtype())),
      octaves);  // 2 * enc_width
  auto rows = positional_encoding(spec.row_offsets(options).unsqueeze(1), octaves);  // H' x enc
  auto cols = positional_encoding(spec.col_offsets(options).unsqueeze(1), octaves);  // W' x enc
  std::vector<double> tap_values;
  for (std::int64_t k1 = 0; k1 < kernel; ++k1) {
    for (std::int64_t k2 = 0; k2 < kernel; ++k2) {
      tap_values.push_back(normalised_tap(k1, kernel));
      tap_values.push_back(normalised_tap(k2, kernel));
    }
  }
  auto tap_enc = positional_encoding(
      torch::tensor(tap_values, torch::TensorOptions().dtype(torch::kFloat64))
          .to(c10::typeMetaToScalarType(options.dtype()))
          .view({taps, 2}),
      octaves);  // K^2 x 2 enc

  constexpr std::int64_t kChunkEvaluations = 1 << 18;
  const auto chunk_rows = std::max<std::int64_t>(1, kChunkEvaluations / (out_w * taps));

  std::vector<torch::Tensor> bands;
  for (std::int64_t r0 = 0; r0 < out_h; r0 += chunk_rows) {
    const auto r1 = std::min(out_h, r0 + chunk_rows);
    const auto count = r1 - r0;
    const std::vector<std::int64_t> grid{count, out_w, taps};
    auto input = torch::cat(
        {scale.view({1, 1, 1, 2 * enc_width}).expand({count, out_w, taps, 2 * enc_width}),
         rows.slice(0, r0, r1).view({count, 1, 1, enc_width}).expand({count, out_w, taps, enc_width}),
         cols.view({1, out_w, 1, enc_width}).expand({count, out_w, taps, enc_width}),
         tap_enc.view({1, 1, taps, 2 * enc_width}).expand({count, out_w, taps, 2 * enc_width})},
        3);
    bands.push_back(mlp.forward(input.reshape({-1, kHyperInputs * enc_width})).view(grid));
  }

  KernelBank bank;
  bank.key = {spec.alpha(), spec.beta(), spec.in_h(), spec.in_w(), kernel, parameter_version(mlp)};
  bank.weights = bands.size() == 1 ? bands.front() : torch::cat(bands, 0);
  return bank;
}

torch::Tensor unfold_neighbourhood(const torch::Tensor& features, std::int64_t kernel) {
  require(features.dim() == 4, "unfold: expected N x C x H x W");
  require(kernel >= 1 && kernel % 2 == 1, "unfold: kernel must be odd");
  namespace F = torch::nn::functional;
  const auto n = features.size(0);
  const auto c = features.size(1);
  const auto h = features.size(2);
  const auto w = features.size(3);
  if (kernel == 1) return features;
  auto cols = F::unfold(features, F::UnfoldFuncOptions({kernel, kernel}).padding((kernel - 1) / 2));
  return cols.view({n, c * kernel * kernel, h, w});
}

torch::Tensor hadamard_fold(const torch::Tensor& columns, const torch::Tensor& weights,
                            std::int64_t row_begin) {
  require(columns.dim() == 4 && weights.dim() == 3, "hadamard_fold: bad ranks");
  const auto taps = weights.size(2);
  const auto n = columns.size(0);
  const auto rows = columns.size(2);
  const auto cols = columns.size(3);
  require(columns.size(1) % taps == 0, "hadamard_fold: channel count is not a multiple of K^2");
  require(row_begin >= 0 && row_begin + rows <= weights.size(0) && cols == weights.size(1),
          "hadamard_fold: kernel bank does not match the feature grid");
  const auto c = columns.size(1) / taps;
  auto w = weights.slice(0, row_begin, row_begin + rows).permute({2, 0, 1});
  return (columns.view({n, c, taps, rows, cols}) * w.unsqueeze(0).unsqueeze(0)).sum(2);
}

HyperUpsamplerImpl::HyperUpsamplerImpl(std::int64_t channels, std::int64_t kernel,
                                       std::vector<std::int64_t> mlp_hidden, int octaves)
    : channels_(channels), kernel_(kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("unfold size K must be odd");
  feature_projection_ = register_module("feature_projection", conv1x1(2 * channels, channels));
  feature_block_ = register_module("feature_block", ResidualBlock(channels));
  mlp_ = register_module("mlp", HyperMLP(std::move(mlp_hidden), octaves));
  head_mix_ = register_module("head_mix", conv1x1(channels, channels));
  head_out_ = register_module("head_out", conv3x3(channels, 3));
}

torch::Tensor HyperUpsamplerImpl::sr_features(const torch::Tensor& refined,
                                              const torch::Tensor& hidden) {
  require(refined.sizes() == hidden.sizes(), "sr_features: g_c and h_c shapes differ");
  return feature_block_->forward(feature_projection_->forward(torch::cat({refined, hidden}, 1)));
}

torch::Tensor HyperUpsamplerImpl::prepare_sr_features(const torch::Tensor& refined,
                                                      const torch::Tensor& hidden,
                                                      const ScaleSpec& spec) {
  auto unfolded = unfold_neighbourhood(sr_features(refined, hidden), kernel_);
  return resize_bilinear(unfolded, spec.alpha(), spec.beta(), spec.out_h(), spec.out_w());
}

void HyperUpsamplerImpl::check_bank(const KernelBank& bank, const ScaleSpec& spec) const {
  if (bank.out_h() != spec.out_h() || bank.out_w() != spec.out_w() ||
      bank.taps() != kernel_ * kernel_) {
    throw InvalidInput("kernel bank " + std::to_string(bank.out_h()) + "x" +
                       std::to_string(bank.out_w()) + "x" + std::to_string(bank.taps()) +
                       " does not match output " + std::to_string(spec.out_h()) + "x" +
                       std::to_string(spec.out_w()) + " with K=" + std::to_string(kernel_));
  }
}

torch::Tensor HyperUpsamplerImpl::head(const torch::Tensor& folded, const torch::Tensor& lr_frame,
                                       const ScaleSpec& spec) {
  require(lr_frame.dim() == 4 && lr_frame.size(2) == spec.in_h() && lr_frame.size(3) == spec.in_w(),
          "upsample: LR frame does not match the scale spec");
  auto residual = head_out_->forward(leaky(head_mix_->forward(folded)));
  return residual + resize_bilinear(lr_frame, spec.alpha(), spec.beta(), spec.out_h(), spec.out_w());
}

torch::Tensor HyperUpsamplerImpl::upsample(const torch::Tensor& s, const KernelBank& bank,
                                           const torch::Tensor& lr_frame, const ScaleSpec& spec) {
  check_bank(bank, spec);
  require(s.dim() == 4 && s.size(2) == spec.out_h() && s.size(3) == spec.out_w(),
          "upsample: SR features do not match the output size");
  return head(hadamard_fold(s, bank.weights.to(s.scalar_type())), lr_frame, spec);
}

torch::Tensor HyperUpsamplerImpl::forward(const torch::Tensor& refined, const torch::Tensor& hidden,
                                          const torch::Tensor& lr_frame, const KernelBank& bank,
                                          const ScaleSpec& spec) {
  check_bank(bank, spec);
  auto unfolded = unfold_neighbourhood(sr_features(refined, hidden), kernel_);
  const auto weights = bank.weights.to(unfolded.scalar_type());
  const auto per_row = unfolded.size(0) * unfolded.size(1) * spec.out_w();
  constexpr std::int64_t kBandElements = 1 << 23;
  const auto band = std::max<std::int64_t>(1, kBandElements / per_row);
  std::vector<torch::Tensor> folded;
  for (std::int64_t r0 = 0; r0 < spec.out_h(); r0 += band) {
    const auto r1 = std::min(spec.out_h(), r0 + band);
    auto s = resize_bilinear(unfolded, spec.alpha(), spec.beta(), spec.out_h(), spec.out_w(), r0, r1);
    folded.push_back(hadamard_fold(s, weights, r0));
  }
  return head(folded.size() == 1 ? folded.front() : torch::cat(folded, 2), lr_frame, spec);
}

namespace {

template <typename T>
void put(std::vector<char>& out, T value) {
  const auto* p = reinterpret_cast<const char*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<char>& in, std::size_t& pos, std::size_t limit) {
  if (sizeof(T) > limit - pos) throw CorruptBlob("kernel bank truncated");
  T value{};
  std::copy_n(in.data() + pos, sizeof(T), reinterpret_cast<char*>(&value));
  pos += sizeof(T);
  return value;
}

constexpr char kBankMagic[8] = {'A', 'V', 'S', 'R', 'B', 'A', 'N', 'K'};

}  // namespace

void export_bank(const std::filesystem::path& path, const KernelBank& bank) {
  const auto w = bank.weights.detach().contiguous().cpu();
  require(w.dim() == 3, "export_bank: weights must be rank 3");
  std::uint32_t dtype = 0;
  if (w.scalar_type() == torch::kFloat64) {
    dtype = 1;
  } else {
    require(w.scalar_type() == torch::kFloat32, "export_bank: unsupported dtype");
  }
  std::vector<char> out(std::begin(kBankMagic), std::end(kBankMagic));
  put<std::uint32_t>(out, kBankFormatVersion);
  put<double>(out, bank.key.alpha);
  put<double>(out, bank.key.beta);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(bank.key.in_h));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(bank.key.in_w));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bank.key.kernel));
  put<std::uint64_t>(out, bank.key.parameter_version);
  put<std::uint32_t>(out, dtype);
  put<std::uint32_t>(out, 3);
  for (auto d : w.sizes()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  const auto* data = static_cast<const char*>(w.data_ptr());
  out.insert(out.end(), data, data + w.numel() * w.element_size());
  put<std::uint64_t>(out, fnv1a64(out.data(), out.size()));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("cannot open for writing: " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error("write failed: " + path.string());
}

KernelBank import_bank(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error("cannot open: " + path.string());
  std::vector<char> in((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (in.size() < sizeof(kBankMagic) + 8 || !std::equal(std::begin(kBankMagic), std::end(kBankMagic), in.begin())) {
    throw CorruptBlob("not a kernel bank: " + path.string());
  }
  const auto body = in.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::copy_n(in.data() + body, sizeof(stored), reinterpret_cast<char*>(&stored));
  if (stored != fnv1a64(in.data(), body)) throw CorruptBlob("kernel bank checksum mismatch");

  std::size_t pos = sizeof(kBankMagic);
  const auto version = take<std::uint32_t>(in, pos, body);
  if (version != kBankFormatVersion) {
    throw VersionMismatch("kernel bank version " + std::to_string(version));
  }
  KernelBank bank;
  bank.key.alpha = take<double>(in, pos, body);
  bank.key.beta = take<double>(in, pos, body);
  bank.key.in_h = static_cast<std::int64_t>(take<std::uint64_t>(in, pos, body));
  bank.key.in_w = static_cast<std::int64_t>(take<std::uint64_t>(in, pos, body));
  bank.key.kernel = take<std::uint32_t>(in, pos, body);
  bank.key.parameter_version = take<std::uint64_t>(in, pos, body);
  const auto dtype = take<std::uint32_t>(in, pos, body);
  const auto rank = take<std::uint32_t>(in, pos, body);
  if (rank != 3 || dtype > 1) throw CorruptBlob("kernel bank header is malformed");
  std::vector<std::int64_t> sizes(3);
  for (auto& s : sizes) s = static_cast<std::int64_t>(take<std::uint64_t>(in, pos, body));
  auto weights = torch::empty(sizes, torch::TensorOptions().dtype(dtype == 0 ? torch::kFloat32 : torch::kFloat64));
  const auto bytes = static_cast<std::size_t>(weights.numel() * weights.element_size());
  if (bytes != body - pos) throw CorruptBlob("kernel bank payload size mismatch");
  std::copy_n(in.data() + pos, bytes, static_cast<char*>(weights.data_ptr()));
  bank.weights = weights;
  return bank;
}

}  // namespace avsr
