#ifndef UDOR_IMAGE_IO_HPP
#define UDOR_IMAGE_IO_HPP

#include <png.h>
#include <torch/torch.h>

#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "udor/common.hpp"

namespace udor {

// Images live in memory as float tensors [1,H,W] in [0,1] and on disk as
// 8-bit grayscale PNG. round(v*255) on write, /255 on read.

inline std::vector<uint8_t> to_bytes(const torch::Tensor& image) {
  auto img = image.to(torch::kFloat32).contiguous().view({-1});
  std::vector<uint8_t> out(img.numel());
  const float* p = img.data_ptr<float>();
  for (int64_t i = 0; i < img.numel(); ++i) {
    float v = p[i];
    v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    out[i] = uint8_t(v * 255.f + 0.5f);
  }
  return out;
}

inline void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  TORCH_CHECK(image.dim() == 3 && image.size(0) == 1, "write_png expects [1,H,W]");
  const int64_t h = image.size(1), w = image.size(2);
  auto bytes = to_bytes(image);

  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IoError("libpng failure writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, uint32_t(w), uint32_t(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int64_t r = 0; r < h; ++r) rows[r] = bytes.data() + r * w;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline torch::Tensor read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw IoError("cannot open " + path.string());
  uint8_t sig[8];
  if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8)) {
    std::fclose(fp);
    throw FormatError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw IoError("libpng failure reading " + path.string());
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalize anything to 8-bit grayscale.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray(png, 1, -1, -1);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int64_t h = png_get_image_height(png, info);
  const int64_t w = png_get_image_width(png, info);
  std::vector<uint8_t> bytes(size_t(h) * w);
  std::vector<png_bytep> rows(h);
  for (int64_t r = 0; r < h; ++r) rows[r] = bytes.data() + r * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  auto out = torch::empty({1, h, w}, torch::kFloat32);
  float* p = out.data_ptr<float>();
  for (size_t i = 0; i < bytes.size(); ++i) p[i] = float(bytes[i]) / 255.f;
  return out;
}

}  // namespace udor

#endif  // UDOR_IMAGE_IO_HPP
