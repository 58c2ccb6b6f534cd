#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

namespace avsr {

/// 8-bit PNG -> 3 x H x W float32 in [0, 1]. Gray and alpha inputs are
/// expanded / dropped; 16-bit inputs are reduced to 8 bits.
torch::Tensor read_png(const std::filesystem::path& path);

/// 3 x H x W (or 1 x H x W) in [0, 1] -> 8-bit RGB (or gray) PNG, rounding to
/// nearest after clamping.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// "frame_%08d.png"
std::string frame_name(std::int64_t index);

/// PNG files of `dir` in lexicographic order.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// T x 3 x H x W; throws InvalidInput when the directory is empty or frame
/// sizes differ.
torch::Tensor read_video(const std::filesystem::path& dir);

/// Writes frame_00000000.png, frame_00000001.png, ... into `dir`.
void write_video(const std::filesystem::path& dir, const torch::Tensor& video);

}  // namespace avsr
