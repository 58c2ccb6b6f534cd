#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "avsr/config.hpp"
#include "avsr/kernel_cache.hpp"
#include "avsr/model.hpp"
#include "avsr/tensor_io.hpp"

namespace avsr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::int64_t step = 0;
  NamedTensors parameters;  // every parameter and buffer, by module path
};

/// Writes the model's configuration, `step` and all named tensors. The file
/// is written next to `path` and renamed into place.
void save_checkpoint(AvsrModelImpl& model, const std::filesystem::path& path,
                     std::int64_t step = 0);

/// Throws CorruptBlob / VersionMismatch on unreadable files.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Builds a model from the stored configuration and restores its tensors.
AvsrModel load_checkpoint(const std::filesystem::path& path,
                          std::shared_ptr<KernelCache> cache = nullptr,
                          std::int64_t* step = nullptr);

/// Restores tensors into an existing model; throws ConfigMismatch when the
/// stored configuration differs from the model's.
void load_into(AvsrModelImpl& model, const std::filesystem::path& path);

}  // namespace avsr
