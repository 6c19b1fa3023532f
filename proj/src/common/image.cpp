#include "gae/common/image.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include "gae/common/error.hpp"

namespace gae {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_or_throw(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw UserError("cannot open image file: " + path.string());
  return f;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* where = static_cast<const std::filesystem::path*>(png_get_error_ptr(png));
  throw UserError("PNG decode failed for " + (where ? where->string() : std::string("?")) +
                  ": " + msg);
}

void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageSize read_png_size(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UserError("missing image: " + path.string());
  std::ifstream in(path, std::ios::binary);
  unsigned char head[24] = {};
  in.read(reinterpret_cast<char*>(head), sizeof head);
  if (in.gcount() != sizeof head || png_sig_cmp(head, 0, 8) != 0) {
    throw UserError("not a PNG file: " + path.string());
  }
  // Bytes 12..15 must be "IHDR"; width and height follow big-endian.
  if (head[12] != 'I' || head[13] != 'H' || head[14] != 'D' || head[15] != 'R') {
    throw UserError("PNG missing IHDR: " + path.string());
  }
  auto be32 = [&](int off) {
    return (static_cast<std::uint32_t>(head[off]) << 24) |
           (static_cast<std::uint32_t>(head[off + 1]) << 16) |
           (static_cast<std::uint32_t>(head[off + 2]) << 8) |
           static_cast<std::uint32_t>(head[off + 3]);
  };
  return {static_cast<int>(be32(16)), static_cast<int>(be32(20))};
}

RgbImage read_png(const std::filesystem::path& path) {
  auto file = open_or_throw(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING,
                                           const_cast<std::filesystem::path*>(&path),
                                           png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  RgbImage img(static_cast<int>(width), static_cast<int>(height));
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = img.at(0, static_cast<int>(y));
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0) throw UserError("write_png: empty image");
  auto file = open_or_throw(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING,
                                            const_cast<std::filesystem::path*>(&path),
                                            png_error_fn, png_warning_fn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.at(0, y)));
  }
  png_write_end(png, nullptr);
}

}  // namespace gae
