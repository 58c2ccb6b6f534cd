#include "avsr/init.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

namespace avsr {

at::Generator make_generator(std::uint64_t seed) { return at::detail::createCPUGenerator(seed); }

void uniform_(torch::Tensor& tensor, double bound, at::Generator& gen) {
  torch::NoGradGuard no_grad;
  auto draw = torch::rand(tensor.sizes(), gen, torch::TensorOptions().dtype(torch::kFloat64));
  tensor.copy_((draw * 2.0 - 1.0) * bound);
}

namespace {

void reinit_own(torch::nn::Module& module, at::Generator& gen) {
  auto params = module.named_parameters(/*recurse=*/false);
  auto* weight = params.find("weight");
  if (weight == nullptr || weight->dim() < 2) return;
  std::int64_t fan_in = 1;
  for (std::int64_t d = 1; d < weight->dim(); ++d) fan_in *= weight->size(d);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  uniform_(*weight, bound, gen);
  if (auto* bias = params.find("bias"); bias != nullptr && bias->defined()) {
    uniform_(*bias, bound, gen);
  }
}

}  // namespace

void seeded_reinit(torch::nn::Module& module, std::uint64_t seed) {
  auto gen = make_generator(seed);
  // Usable from constructors: the module itself need not be shared yet.
  reinit_own(module, gen);
  for (const auto& sub : module.modules(/*include_self=*/false)) reinit_own(*sub, gen);
}

}  // namespace avsr
