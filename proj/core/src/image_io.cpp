#include "avsr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <csetjmp>
#include <memory>

#include "avsr/error.hpp"

namespace avsr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

thread_local char png_message[256];

// libpng unwinds through C frames, so errors longjmp back to the caller.
[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  std::snprintf(png_message, sizeof(png_message), "%s", message);
  png_longjmp(png, 1);
}

struct Buffers {
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
};

void png_warn(png_structp, png_const_charp) {}

}  // namespace

torch::Tensor read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw InvalidInput("cannot open image " + path.string());
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw InvalidInput("not a PNG file: " + path.string());
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  auto buffers = std::make_unique<Buffers>();
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InvalidInput("png " + path.string() + ": " + png_message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const bool packed = png_get_rowbytes(png, info) == width * 3;
  if (packed) {
    buffers->pixels.resize(static_cast<std::size_t>(width) * height * 3);
    buffers->rows.resize(height);
    for (png_uint_32 r = 0; r < height; ++r) {
      buffers->rows[r] = buffers->pixels.data() + static_cast<std::size_t>(r) * width * 3;
    }
    png_read_image(png, buffers->rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!packed) throw InvalidInput("png " + path.string() + ": unsupported pixel layout");
  auto& pixels = buffers->pixels;

  auto hwc = torch::from_blob(pixels.data(), {static_cast<std::int64_t>(height),
                                              static_cast<std::int64_t>(width), 3},
                              torch::kUInt8);
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  require(image.dim() == 3 && (image.size(0) == 3 || image.size(0) == 1),
          "write_png: expected 3 x H x W or 1 x H x W");
  const auto channels = image.size(0);
  const auto height = image.size(1);
  const auto width = image.size(2);
  auto bytes = image.detach().to(torch::kFloat64).clamp(0.0, 1.0).mul(255.0).round()
                   .to(torch::kUInt8).permute({1, 2, 0}).contiguous();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw InvalidInput("cannot write image " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InvalidInput("png " + path.string() + ": " + png_message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto* base = bytes.data_ptr<std::uint8_t>();
  for (std::int64_t r = 0; r < height; ++r) png_write_row(png, base + r * width * channels);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::string frame_name(std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%08lld.png", static_cast<long long>(index));
  return buf;
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> frames;
  if (!std::filesystem::is_directory(dir)) return frames;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      frames.push_back(entry.path());
    }
  }
  std::sort(frames.begin(), frames.end());
  return frames;
}

torch::Tensor read_video(const std::filesystem::path& dir) {
  const auto paths = list_frames(dir);
  if (paths.empty()) throw InvalidInput("no PNG frames in " + dir.string());
  std::vector<torch::Tensor> frames;
  for (const auto& p : paths) {
    frames.push_back(read_png(p));
    if (frames.back().sizes() != frames.front().sizes()) {
      throw InvalidInput("frame " + p.string() + " differs in size from the first frame");
    }
  }
  return torch::stack(frames, 0);
}

void write_video(const std::filesystem::path& dir, const torch::Tensor& video) {
  require(video.dim() == 4, "write_video: expected T x C x H x W");
  std::filesystem::create_directories(dir);
  for (std::int64_t t = 0; t < video.size(0); ++t) write_png(dir / frame_name(t), video[t]);
}

}  // namespace avsr
