#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <thread>

#include "avsr/error.hpp"
#include "avsr/hyperup.hpp"
#include "avsr/init.hpp"
#include "avsr/kernel_cache.hpp"
#include "avsr/sampling.hpp"
#include "test_support.hpp"

using namespace avsr;
using namespace avsr::testing;

namespace {

HyperMLP small_mlp(std::uint64_t seed = 3) {
  HyperMLP mlp(std::vector<std::int64_t>{8, 8}, 3);
  auto gen = make_generator(seed);
  mlp->reset_parameters(gen);
  return mlp;
}

HyperUpsampler make_up(std::int64_t channels, std::int64_t kernel, std::vector<std::int64_t> hidden,
                       int octaves) {
  return HyperUpsampler(channels, kernel, std::move(hidden), octaves);
}

void zero_conv(torch::nn::Conv2d& conv) {
  torch::NoGradGuard no_grad;
  conv->weight.zero_();
  conv->bias.zero_();
}

}  // namespace

TEST(HyperUp, ScaleSpecSizes) {
  ScaleSpec a(2.5, 3.5, 16, 16);
  EXPECT_EQ(a.out_h(), 40);
  EXPECT_EQ(a.out_w(), 56);
  ScaleSpec b(7.2, 6.0, 16, 16);
  EXPECT_EQ(b.out_h(), 115);
  EXPECT_EQ(b.out_w(), 96);
  ScaleSpec c(1.0, 1.0, 5, 7);
  EXPECT_EQ(c.out_h(), 5);
  EXPECT_EQ(c.out_w(), 7);
  EXPECT_THROW(ScaleSpec(0.5, 2.0, 4, 4), InvalidInput);
  EXPECT_THROW(ScaleSpec(2.0, std::nan(""), 4, 4), InvalidInput);
}

TEST(HyperUp, RelativeCoordinatesInRange) {
  for (double s : {1.0, 1.3, 2.0, 2.5, 3.7, 4.0}) {
    ScaleSpec spec(s, s, 11, 11);
    auto r = spec.row_offsets(torch::TensorOptions().dtype(torch::kFloat64));
    EXPECT_GE(r.min().item<double>(), -0.5);
    EXPECT_LT(r.max().item<double>(), 0.5);
  }
  // Scale 2: rows alternate -0.25, +0.25 around each LR centre.
  ScaleSpec two(2.0, 2.0, 3, 3);
  auto r = two.row_offsets(torch::TensorOptions().dtype(torch::kFloat64));
  for (std::int64_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(r[i].item<double>(), i % 2 ? 0.25 : -0.25);
}

TEST(HyperUp, EncodingBasics) {
  auto enc = positional_encoding(torch::zeros({1, 1}, torch::kFloat64), 6);
  ASSERT_EQ(enc.size(1), 12);
  for (int j = 0; j < 6; ++j) {
    EXPECT_EQ(enc[0][2 * j].item<double>(), 0.0);
    EXPECT_EQ(enc[0][2 * j + 1].item<double>(), 1.0);
  }
  ScaleSpec spec(2.0, 2.0, 4, 4);
  auto e = encode_scale_inputs(spec, 0, 0, 1, 1, 3);
  EXPECT_EQ(e.numel(), 72);
  // Rows 0 and 2 share the same relative coordinate at scale 2.
  EXPECT_TRUE(bit_equal(e, encode_scale_inputs(spec, 2, 4, 1, 1, 3)));
  EXPECT_FALSE(bit_equal(e, encode_scale_inputs(spec, 1, 0, 1, 1, 3)));
  EXPECT_THROW(encode_scale_inputs(spec, 0, 0, 3, 0, 3), InvalidInput);
  EXPECT_DOUBLE_EQ(normalised_tap(0, 3), -1.0 / 3.0);
  EXPECT_DOUBLE_EQ(normalised_tap(1, 3), 0.0);
}

TEST(HyperUp, MlpMatchesDirectEncoding) {
  auto mlp = small_mlp();
  mlp->to(torch::kFloat64);
  ScaleSpec spec(2.5, 1.5, 3, 4);
  auto bank = predict_kernels(*mlp, spec, 3);
  double worst = 0.0;
  for (std::int64_t r = 0; r < spec.out_h(); r += 2) {
    for (std::int64_t c = 0; c < spec.out_w(); c += 3) {
      for (std::int64_t t = 0; t < 9; ++t) {
        auto e = encode_scale_inputs(spec, r, c, t / 3, t % 3, 3, 3).unsqueeze(0);
        worst = std::max(worst, std::abs(mlp->forward(e).item<double>() -
                                         bank.weights[r][c][t].item<double>()));
      }
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(HyperUp, BankShapeAndDeterminism) {
  auto mlp = small_mlp();
  ScaleSpec spec(2.0, 2.0, 4, 4);
  auto a = predict_kernels(*mlp, spec, 3);
  EXPECT_EQ(a.weights.sizes(), (std::vector<std::int64_t>{8, 8, 9}));
  EXPECT_TRUE(torch::isfinite(a.weights).all().item<bool>());
  EXPECT_TRUE(bit_equal(a.weights, predict_kernels(*mlp, spec, 3).weights));
}

TEST(HyperUp, BankIsPeriodicForIntegerScale) {
  auto mlp = small_mlp();
  auto small = predict_kernels(*mlp, ScaleSpec(2.0, 2.0, 3, 3), 3).weights;
  auto large = predict_kernels(*mlp, ScaleSpec(2.0, 2.0, 7, 5), 3).weights;
  // Every 2x2 tile repeats across the grid.
  for (std::int64_t r = 0; r < 14; ++r) {
    for (std::int64_t c = 0; c < 10; ++c) {
      ASSERT_TRUE(bit_equal(large[r][c], small[r % 2][c % 2])) << r << "," << c;
    }
  }
}

TEST(HyperUp, BankIgnoresContent) {
  auto up = make_up(4, 3, {8, 8}, 3);
  auto lr = seeded_rand({1, 3, 4, 4}, 5).requires_grad_();
  ScaleSpec spec(2.0, 2.0, 4, 4);
  auto bank = predict_kernels(*up->mlp(), spec, 3);
  auto g = seeded_randn({1, 4, 4, 4}, 6);
  auto h = seeded_randn({1, 4, 4, 4}, 7);
  auto out = up->forward(g, h, lr, bank, spec);
  auto grads = torch::autograd::grad({bank.weights.sum()}, {lr}, {}, std::nullopt, false, true);
  EXPECT_FALSE(grads[0].defined() && grads[0].abs().sum().item<double>() != 0.0);
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{1, 3, 8, 8}));
}

TEST(HyperUp, CacheHitSkipsMlp) {
  auto mlp = small_mlp();
  KernelCache cache;
  ScaleSpec spec(3.0, 2.0, 5, 6);
  auto first = cache.get_or_compute(*mlp, spec, 3);
  const auto evaluations = mlp->evaluations();
  EXPECT_EQ(evaluations, static_cast<std::uint64_t>(15 * 12 * 9));
  auto second = cache.get_or_compute(*mlp, spec, 3);
  EXPECT_EQ(mlp->evaluations(), evaluations);
  EXPECT_EQ(first.get(), second.get());
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_EQ(cache.misses(), 1u);
  EXPECT_TRUE(bit_equal(second->weights, predict_kernels(*mlp, spec, 3).weights));

  cache.get_or_compute(*mlp, ScaleSpec(2.5, 2.0, 5, 6), 3);
  EXPECT_EQ(cache.size(), 2u);
}

TEST(HyperUp, CacheKeyTracksParameters) {
  auto mlp = small_mlp();
  KernelCache cache;
  ScaleSpec spec(2.0, 2.0, 4, 4);
  auto before = cache.get_or_compute(*mlp, spec, 3);
  {
    torch::NoGradGuard no_grad;
    mlp->parameters().front().add_(0.01);
  }
  auto after = cache.get_or_compute(*mlp, spec, 3);
  EXPECT_NE(before->key.parameter_version, after->key.parameter_version);
  EXPECT_FALSE(bit_equal(before->weights, after->weights));
}

TEST(HyperUp, CacheEvictsLeastRecentlyUsed) {
  auto mlp = small_mlp();
  KernelCache cache(2);
  ScaleSpec a(1.5, 1.5, 4, 4), b(2.0, 2.0, 4, 4), c(2.5, 2.5, 4, 4);
  cache.get_or_compute(*mlp, a, 3);
  cache.get_or_compute(*mlp, b, 3);
  cache.get_or_compute(*mlp, a, 3);  // a becomes most recent
  cache.get_or_compute(*mlp, c, 3);  // evicts b
  EXPECT_EQ(cache.size(), 2u);
  const auto version = parameter_version(*mlp);
  EXPECT_TRUE(cache.find({1.5, 1.5, 4, 4, 3, version}));
  EXPECT_FALSE(cache.find({2.0, 2.0, 4, 4, 3, version}));
  EXPECT_TRUE(cache.find({2.5, 2.5, 4, 4, 3, version}));
  EXPECT_THROW(KernelCache(0), ConfigError);
}

TEST(HyperUp, CacheSingleFlight) {
  auto mlp = small_mlp();
  KernelCache cache;
  ScaleSpec spec(4.0, 4.0, 24, 24);
  std::vector<std::shared_ptr<const KernelBank>> results(6);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < results.size(); ++i) {
    threads.emplace_back([&, i] { results[i] = cache.get_or_compute(*mlp, spec, 3); });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(cache.misses(), 1u);
  EXPECT_EQ(mlp->evaluations(), static_cast<std::uint64_t>(96 * 96 * 9));
  for (const auto& r : results) EXPECT_EQ(r.get(), results.front().get());
}

TEST(HyperUp, UnfoldImpulse) {
  auto x = torch::zeros({1, 1, 4, 4});
  x[0][0][1][1] = 1.0;
  auto u = unfold_neighbourhood(x, 3);
  ASSERT_EQ(u.sizes(), (std::vector<std::int64_t>{1, 9, 4, 4}));
  EXPECT_EQ((u != 0).sum().item<std::int64_t>(), 9);
  for (std::int64_t k1 = 0; k1 < 3; ++k1) {
    for (std::int64_t k2 = 0; k2 < 3; ++k2) {
      // Tap (k1, k2) at pixel (y, x) reads (y + k1 - 1, x + k2 - 1).
      EXPECT_EQ(u[0][k1 * 3 + k2][2 - k1][2 - k2].item<float>(), 1.0f);
    }
  }
  EXPECT_TRUE(bit_equal(unfold_neighbourhood(x, 1), x));
  EXPECT_EQ(unfold_neighbourhood(torch::rand({1, 4, 4, 4}), 3).size(1), 36);
}

TEST(HyperUp, FoldTapCountLaw) {
  auto x = torch::ones({1, 1, 5, 6});
  auto folded = hadamard_fold(unfold_neighbourhood(x, 3), torch::ones({5, 6, 9}));
  auto expected = torch::full({1, 1, 5, 6}, 9.0);
  expected.select(2, 0).fill_(6.0);
  expected.select(2, 4).fill_(6.0);
  expected.select(3, 0).fill_(6.0);
  expected.select(3, 5).fill_(6.0);
  for (auto [r, c] : {std::pair{0, 0}, std::pair{0, 5}, std::pair{4, 0}, std::pair{4, 5}}) expected[0][0][r][c] = 4.0;
  EXPECT_TRUE(bit_equal(folded, expected));
  EXPECT_THROW(hadamard_fold(unfold_neighbourhood(x, 3), torch::ones({5, 5, 9})), InvalidInput);
}

TEST(HyperUp, FeaturePrepIdentityAtUnitScale) {
  auto up = make_up(4, 1, {8}, 2);
  auto g = seeded_randn({1, 4, 5, 5}, 8);
  auto h = seeded_randn({1, 4, 5, 5}, 9);
  ScaleSpec spec(1.0, 1.0, 5, 5);
  EXPECT_TRUE(bit_equal(up->prepare_sr_features(g, h, spec), up->sr_features(g, h)));
  auto three = make_up(4, 3, {8}, 2);
  EXPECT_EQ(three->prepare_sr_features(g, h, ScaleSpec(2.0, 2.0, 5, 5)).sizes(),
            (std::vector<std::int64_t>{1, 36, 10, 10}));
}

TEST(HyperUp, HeadReducesToBilinearLowRes) {
  ScaleSpec spec(2.5, 3.0, 6, 5);
  auto lr = seeded_rand({1, 3, 6, 5}, 10);
  auto expected = resize_bilinear(lr, 2.5, 3.0, spec.out_h(), spec.out_w());
  auto g = seeded_randn({1, 4, 6, 5}, 11);
  auto h = seeded_randn({1, 4, 6, 5}, 12);

  auto up = make_up(4, 1, {8}, 2);
  zero_conv(up->head_out());
  KernelBank ones{{}, torch::ones({spec.out_h(), spec.out_w(), 1})};
  EXPECT_LT(max_abs_diff(up->forward(g, h, lr, ones, spec), expected), 1e-6);

  auto three = make_up(4, 3, {8}, 2);
  {
    torch::NoGradGuard no_grad;
    three->head_mix()->bias.zero_();
    three->head_out()->bias.zero_();
  }
  KernelBank zeros{{}, torch::zeros({spec.out_h(), spec.out_w(), 9})};
  EXPECT_LT(max_abs_diff(three->forward(g, h, lr, zeros, spec), expected), 1e-6);
}

TEST(HyperUp, BandedMatchesFullMaterialisation) {
  auto up = make_up(4, 3, {8, 8}, 3);
  ScaleSpec spec(3.3, 2.7, 7, 9);
  auto g = seeded_randn({1, 4, 7, 9}, 13);
  auto h = seeded_randn({1, 4, 7, 9}, 14);
  auto lr = seeded_rand({1, 3, 7, 9}, 15);
  auto bank = predict_kernels(*up->mlp(), spec, 3);
  auto banded = up->forward(g, h, lr, bank, spec);
  auto full = up->upsample(up->prepare_sr_features(g, h, spec), bank, lr, spec);
  EXPECT_LT(max_abs_diff(banded, full), 1e-6);
}

TEST(HyperUp, RejectsMismatchedBank) {
  auto up = make_up(4, 3, {8}, 2);
  ScaleSpec spec(2.0, 2.0, 4, 4);
  auto g = seeded_randn({1, 4, 4, 4}, 16);
  auto lr = seeded_rand({1, 3, 4, 4}, 17);
  auto wrong = predict_kernels(*up->mlp(), ScaleSpec(2.5, 2.0, 4, 4), 3);
  EXPECT_THROW(up->forward(g, g, lr, wrong, spec), InvalidInput);
  auto wrong_k = predict_kernels(*up->mlp(), spec, 1);
  EXPECT_THROW(up->forward(g, g, lr, wrong_k, spec), InvalidInput);
  EXPECT_THROW(HyperUpsampler(4, 2), ConfigError);
}

TEST(HyperUp, MlpGradientMatchesFiniteDifferences) {
  auto up = make_up(2, 3, {8, 8}, 3);
  up->to(torch::kFloat64);
  ScaleSpec spec(2.0, 2.0, 2, 2);
  auto g = seeded_randn({1, 2, 2, 2}, 18, f64());
  auto h = seeded_randn({1, 2, 2, 2}, 19, f64());
  auto lr = seeded_rand({1, 3, 2, 2}, 20, f64());
  auto probe = seeded_randn({1, 3, 4, 4}, 21, f64());
  for (auto& p : up->mlp()->parameters()) {
    auto loss = [&] {
      auto bank = predict_kernels(*up->mlp(), spec, 3);
      return (up->forward(g, h, lr, bank, spec) * probe).sum();
    };
    EXPECT_LT(gradient_error(loss, p, 1e-6), 1e-2);
  }
}

TEST(HyperUp, BankExportImportRoundTrip) {
  TempDir dir("bank");
  auto mlp = small_mlp();
  auto bank = predict_kernels(*mlp, ScaleSpec(2.5, 3.0, 4, 5), 3);
  const auto path = dir.path() / "bank.bin";
  export_bank(path, bank);
  auto back = import_bank(path);
  EXPECT_EQ(back.key, bank.key);
  EXPECT_TRUE(bit_equal(back.weights, bank.weights));

  KernelCache cache;
  cache.insert(back);
  EXPECT_TRUE(cache.find(bank.key));

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << data;
  };
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  write(flipped);
  EXPECT_THROW(import_bank(path), CorruptBlob);
  write(bytes.substr(0, bytes.size() - 20));
  EXPECT_THROW(import_bank(path), CorruptBlob);
  write("not a bank");
  EXPECT_THROW(import_bank(path), CorruptBlob);
}
