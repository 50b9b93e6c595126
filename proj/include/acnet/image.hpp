#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace acnet {

// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
  int h = 0, w = 0;
  std::vector<std::uint8_t> data;  // h * w * 3, RGB order

  RgbImage() = default;
  RgbImage(int height, int width)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)];
  }
  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + static_cast<std::size_t>(c)];
  }
};

// 16-bit single-channel raster (depth in millimeters on disk).
struct Gray16Image {
  int h = 0, w = 0;
  std::vector<std::uint16_t> data;  // h * w

  Gray16Image() = default;
  Gray16Image(int height, int width)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width, 0) {}

  std::uint16_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  std::uint16_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
};

// 8-bit single-channel raster (class ids).
struct Gray8Image {
  int h = 0, w = 0;
  std::vector<std::uint8_t> data;  // h * w

  Gray8Image() = default;
  Gray8Image(int height, int width)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
};

// Readers insist on the exact bit depth and channel layout named in the
// function; anything else is reported as an error, not converted.
RgbImage read_rgb_png(const std::string& path);
Gray16Image read_gray16_png(const std::string& path);
Gray8Image read_gray8_png(const std::string& path);

void write_rgb_png(const std::string& path, const RgbImage& img);
void write_gray16_png(const std::string& path, const Gray16Image& img);
void write_gray8_png(const std::string& path, const Gray8Image& img);

// Fixed 256-entry palette for visualizing class-id maps (the bit-interleaved
// scheme popularized by the PASCAL VOC tooling).
const std::array<std::array<std::uint8_t, 3>, 256>& class_color_table();

// Maps every class id through class_color_table().
RgbImage colorize_labels(const Gray8Image& labels);

}  // namespace acnet
