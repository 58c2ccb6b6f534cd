#include <gtest/gtest.h>

#include "avsr/error.hpp"
#include "avsr/prior.hpp"
#include "avsr/tensor_io.hpp"
#include "test_support.hpp"

using namespace avsr;
using namespace avsr::testing;

namespace {

FeaturePyramid pyramid(std::vector<std::int64_t> widths, std::uint64_t seed = 7,
                       PriorKind kind = PriorKind::kSeededPyramid,
                       const std::optional<std::filesystem::path>& weights = std::nullopt) {
  return std::make_shared<FeaturePyramidImpl>(kind, std::move(widths), seed, weights);
}

}  // namespace

TEST(Prior, KindNames) {
  for (auto kind : {PriorKind::kNone, PriorKind::kSeededPyramid, PriorKind::kPretrainedVgg}) {
    EXPECT_EQ(parse_prior_kind(to_string(kind)), kind);
  }
  EXPECT_THROW(parse_prior_kind("resnet"), ConfigError);
  EXPECT_THROW(pyramid({}), ConfigError);
  EXPECT_THROW(pyramid({4}, 1, PriorKind::kNone), ConfigError);
}

TEST(Prior, OutputChannelsAndFramePassthrough) {
  PriorExtractor prior(pyramid({4, 8, 8, 8, 8}), 64);
  auto x = seeded_rand({2, 3, 20, 18}, 1);
  auto p = prior->forward(x);
  EXPECT_EQ(p.sizes(), (std::vector<std::int64_t>{2, 67, 20, 18}));
  EXPECT_TRUE(bit_equal(p.slice(1, 64, 67), x));
  EXPECT_TRUE(bit_equal(p, prior->forward(x)));
}

TEST(Prior, StageSignatureAndSizes) {
  auto pyr = pyramid({4, 6, 8, 10, 12});
  auto sig = pyr->signature();
  ASSERT_EQ(sig.size(), 5u);
  for (std::size_t s = 0; s < sig.size(); ++s) EXPECT_EQ(sig[s].stride, 1 << s);
  EXPECT_EQ(pyr->total_channels(), 40);
  EXPECT_EQ(pyr->deepest_stride(), 16);
  auto stages = pyr->stages(seeded_rand({1, 3, 37, 21}, 2));
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::int64_t stride = 1 << s;
    EXPECT_EQ(stages[s].size(1), sig[s].channels);
    EXPECT_EQ(stages[s].size(2), (37 + stride - 1) / stride);
    EXPECT_EQ(stages[s].size(3), (21 + stride - 1) / stride);
  }
}

TEST(Prior, RejectsFramesBelowDeepestStride) {
  PriorExtractor prior(pyramid({4, 4, 4, 4, 4}), 8);
  EXPECT_THROW(prior->forward(torch::rand({1, 3, 15, 40})), InvalidInput);
  EXPECT_THROW(prior->forward(torch::rand({1, 3, 40, 12})), InvalidInput);
  EXPECT_NO_THROW(prior->forward(torch::rand({1, 3, 16, 16})));
  EXPECT_THROW(prior->forward(torch::rand({1, 1, 32, 32})), InvalidInput);
}

TEST(Prior, SingleStageIsShiftEquivariant) {
  PriorExtractor prior(pyramid({6}), 5);
  auto x = torch::zeros({1, 3, 16, 16});
  x.slice(2, 2, 14).slice(3, 2, 14).copy_(seeded_rand({1, 3, 12, 12}, 3));
  const int dy = 2, dx = -1;
  auto shifted = torch::roll(x, {dy, dx}, {2, 3});  // content stays inside the zero border
  auto a = prior->forward(x).slice(1, 0, 5);
  auto b = prior->forward(shifted).slice(1, 0, 5);
  auto a_moved = torch::roll(a, {dy, dx}, {2, 3});
  // Compare away from the wrapped border.
  auto inner = [](const torch::Tensor& t) { return t.slice(2, 3, 13).slice(3, 3, 13); };
  EXPECT_LT(max_abs_diff(inner(a_moved), inner(b)), 1e-6);
}

TEST(Prior, PyramidIsFrozen) {
  PriorExtractor prior(pyramid({4, 8}), 6);
  for (const auto& p : prior->pyramid().parameters()) EXPECT_FALSE(p.requires_grad());
  const auto before = checksum(collect_named(prior->pyramid()));
  auto x = seeded_rand({1, 3, 8, 8}, 4).requires_grad_();
  prior->forward(x).pow(2).sum().backward();
  for (const auto& p : prior->pyramid().parameters()) {
    EXPECT_TRUE(!p.grad().defined() || p.grad().abs().sum().item<double>() == 0.0);
  }
  EXPECT_GT(prior->projection()->weight.grad().abs().sum().item<double>(), 0.0);
  EXPECT_EQ(checksum(collect_named(prior->pyramid())), before);
}

TEST(Prior, VggFallsBackWithoutWeights) {
  auto missing = pyramid({4, 4, 4, 4, 4}, 9, PriorKind::kPretrainedVgg, "/nonexistent/vgg.bin");
  EXPECT_FALSE(missing->pretrained());
  // Two, two, three, three, three convolutions per stage.
  std::int64_t convs = 0;
  for (const auto& item : missing->named_parameters()) {
    if (item.key().ends_with(".weight")) ++convs;
  }
  EXPECT_EQ(convs, 13);
  EXPECT_EQ(missing->stages(seeded_rand({1, 3, 16, 16}, 5)).size(), 5u);
}

TEST(Prior, VggLoadsWeightArchive) {
  TempDir dir("vgg");
  auto source = pyramid({4, 4, 4, 4, 4}, 10, PriorKind::kPretrainedVgg);
  const auto path = dir.path() / "vgg.bin";
  write_archive(path, "AVSRWGTS", 1, {"{}", collect_named(*source)});
  auto loaded = pyramid({4, 4, 4, 4, 4}, 11, PriorKind::kPretrainedVgg, path);
  EXPECT_TRUE(loaded->pretrained());
  auto x = seeded_rand({1, 3, 16, 16}, 6);
  auto a = source->stages(x);
  auto b = loaded->stages(x);
  for (std::size_t s = 0; s < a.size(); ++s) EXPECT_TRUE(bit_equal(a[s], b[s]));
}
