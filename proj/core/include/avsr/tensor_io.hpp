#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace avsr {

/// Ordered name -> tensor map; the unit of on-disk parameter storage.
using NamedTensors = std::map<std::string, torch::Tensor>;

/// Little-endian binary container with a magic tag, version, free-form UTF-8
/// metadata (JSON by convention), named tensors and a trailing FNV-1a-64
/// checksum over everything before it. Supported dtypes: float32, float64.
struct TensorArchive {
  std::string metadata;
  NamedTensors tensors;
};

void write_archive(const std::filesystem::path& path, const std::string& magic,
                   std::uint32_t version, const TensorArchive& archive);

/// Throws CorruptBlob on truncation / bad checksum / bad magic and
/// VersionMismatch when the stored version differs from `version`.
TensorArchive read_archive(const std::filesystem::path& path, const std::string& magic,
                           std::uint32_t version);

/// Copies every entry of `source` into the same-named parameter or buffer of
/// `module`; names, shapes and dtypes must agree exactly.
void assign_named(torch::nn::Module& module, const NamedTensors& source);

/// All parameters and buffers of `module`, detached and contiguous.
NamedTensors collect_named(const torch::nn::Module& module);

std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = 14695981039346656037ull);

/// Order-sensitive checksum over tensor contents (for frozen-parameter checks
/// and cache versioning).
std::uint64_t checksum(const NamedTensors& tensors);

}  // namespace avsr
