#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gae {

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::uint8_t* at(int x, int y) {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

/// Reads the PNG signature and IHDR chunk only. Throws UserError if the
/// file is missing or is not a PNG.
ImageSize read_png_size(const std::filesystem::path& path);

/// Decodes any PNG (palette, gray, alpha, 16-bit) into 8-bit RGB.
RgbImage read_png(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const RgbImage& image);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

}  // namespace gae
