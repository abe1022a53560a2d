// Minimal 8-bit RGB PNG writer (zlib deflate, filter 0 on every scanline).
// Enough for deterministic figure export; no reading, palettes, or alpha.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace volfuse {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 3 bytes per pixel, row-major, top row first

  RgbImage() = default;
  RgbImage(int w, int h)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  void set(int row, int col, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    std::uint8_t* p = &pixels[(static_cast<std::size_t>(row) * width + col) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (std::size_t i = 0; i + 2 < pixels.size(); i += 3) {
      pixels[i] = r;
      pixels[i + 1] = g;
      pixels[i + 2] = b;
    }
  }
};

void write_png(const std::filesystem::path& file, const RgbImage& image);

}  // namespace volfuse
