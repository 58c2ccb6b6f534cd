#include "avsr/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "avsr/error.hpp"

namespace avsr {

namespace {

constexpr const char* kMagic = "AVSRCKPT";

}  // namespace

void save_checkpoint(AvsrModelImpl& model, const std::filesystem::path& path, std::int64_t step) {
  nlohmann::json meta;
  meta["config"] = nlohmann::json::parse(model.config().to_json());
  meta["step"] = step;

  TensorArchive archive;
  archive.metadata = meta.dump();
  archive.tensors = collect_named(model);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto staging = path;
  staging += ".partial";
  write_archive(staging, kMagic, kCheckpointVersion, archive);
  std::filesystem::rename(staging, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  auto archive = read_archive(path, kMagic, kCheckpointVersion);
  Checkpoint ckpt;
  try {
    const auto meta = nlohmann::json::parse(archive.metadata);
    ckpt.config = ModelConfig::from_json(meta.at("config").dump());
    ckpt.step = meta.at("step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptBlob("checkpoint " + path.string() + ": bad metadata: " + e.what());
  }
  ckpt.parameters = std::move(archive.tensors);
  return ckpt;
}

AvsrModel load_checkpoint(const std::filesystem::path& path, std::shared_ptr<KernelCache> cache,
                          std::int64_t* step) {
  auto ckpt = read_checkpoint(path);
  auto model = build_variant(ckpt.config, std::move(cache));
  assign_named(*model, ckpt.parameters);
  if (step != nullptr) *step = ckpt.step;
  return model;
}

void load_into(AvsrModelImpl& model, const std::filesystem::path& path) {
  auto ckpt = read_checkpoint(path);
  if (!(ckpt.config == model.config())) {
    throw ConfigMismatch("checkpoint " + path.string() + " was saved for variant '" +
                         to_string(ckpt.config.variant) + "' with a different configuration than '" +
                         to_string(model.config().variant) + "'");
  }
  assign_named(model, ckpt.parameters);
}

}  // namespace avsr
