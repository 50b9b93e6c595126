#include "acnet/image.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace acnet {

namespace {

struct RawPng {
  int h = 0, w = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::size_t rowbytes = 0;
  std::vector<std::uint8_t> bytes;  // h * rowbytes
};

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// Decodes the whole file with the high-level libpng entry point. All calls
// that can longjmp happen before any local owning state exists, so the error
// path only has the libpng structs and the FILE* to release.
RawPng read_raw(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) fail(path, "cannot open file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail(path, "libpng allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail(path, "not a readable PNG");
  }
  png_init_io(png, fp);
  png_read_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);

  // No libpng call below can error out; plain data copies only.
  RawPng out;
  out.w = static_cast<int>(png_get_image_width(png, info));
  out.h = static_cast<int>(png_get_image_height(png, info));
  out.bit_depth = png_get_bit_depth(png, info);
  out.color_type = png_get_color_type(png, info);
  out.rowbytes = png_get_rowbytes(png, info);
  png_bytepp rows = png_get_rows(png, info);
  out.bytes.resize(out.rowbytes * static_cast<std::size_t>(out.h));
  for (int y = 0; y < out.h; ++y) {
    std::memcpy(out.bytes.data() + static_cast<std::size_t>(y) * out.rowbytes, rows[y],
                out.rowbytes);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return out;
}

void write_raw(const std::string& path, int h, int w, int bit_depth, int color_type,
               const std::uint8_t* bytes, std::size_t rowbytes) {
  if (h <= 0 || w <= 0) fail(path, "refusing to write an empty image");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) fail(path, "cannot open file for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(path, "libpng allocation failed");
  }
  {
    // Row pointer table is fully built before the setjmp region begins.
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
      row_ptrs[static_cast<std::size_t>(y)] =
          const_cast<png_bytep>(bytes + static_cast<std::size_t>(y) * rowbytes);
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      std::fclose(fp);
      fail(path, "PNG encode failed");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_rows(png, info, row_ptrs.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) fail(path, "write failed on close");
}

}  // namespace

RgbImage read_rgb_png(const std::string& path) {
  RawPng raw = read_raw(path);
  if (raw.color_type != PNG_COLOR_TYPE_RGB || raw.bit_depth != 8) {
    fail(path, "expected an 8-bit 3-channel RGB PNG (color type " +
                   std::to_string(raw.color_type) + ", bit depth " +
                   std::to_string(raw.bit_depth) + " found)");
  }
  RgbImage img(raw.h, raw.w);
  const std::size_t want = static_cast<std::size_t>(raw.w) * 3;
  for (int y = 0; y < raw.h; ++y) {
    std::memcpy(img.data.data() + static_cast<std::size_t>(y) * want,
                raw.bytes.data() + static_cast<std::size_t>(y) * raw.rowbytes, want);
  }
  return img;
}

Gray16Image read_gray16_png(const std::string& path) {
  RawPng raw = read_raw(path);
  if (raw.color_type != PNG_COLOR_TYPE_GRAY || raw.bit_depth != 16) {
    fail(path, "expected a 16-bit single-channel PNG (color type " +
                   std::to_string(raw.color_type) + ", bit depth " +
                   std::to_string(raw.bit_depth) + " found)");
  }
  Gray16Image img(raw.h, raw.w);
  for (int y = 0; y < raw.h; ++y) {
    const std::uint8_t* row = raw.bytes.data() + static_cast<std::size_t>(y) * raw.rowbytes;
    for (int x = 0; x < raw.w; ++x) {
      // PNG stores 16-bit samples most significant byte first.
      img.at(y, x) = static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
    }
  }
  return img;
}

Gray8Image read_gray8_png(const std::string& path) {
  RawPng raw = read_raw(path);
  if (raw.color_type != PNG_COLOR_TYPE_GRAY || raw.bit_depth != 8) {
    fail(path, "expected an 8-bit single-channel PNG (color type " +
                   std::to_string(raw.color_type) + ", bit depth " +
                   std::to_string(raw.bit_depth) + " found)");
  }
  Gray8Image img(raw.h, raw.w);
  for (int y = 0; y < raw.h; ++y) {
    std::memcpy(img.data.data() + static_cast<std::size_t>(y) * raw.w,
                raw.bytes.data() + static_cast<std::size_t>(y) * raw.rowbytes,
                static_cast<std::size_t>(raw.w));
  }
  return img;
}

void write_rgb_png(const std::string& path, const RgbImage& img) {
  write_raw(path, img.h, img.w, 8, PNG_COLOR_TYPE_RGB, img.data.data(),
            static_cast<std::size_t>(img.w) * 3);
}

void write_gray16_png(const std::string& path, const Gray16Image& img) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(img.h) * img.w * 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(img.data[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(img.data[i] & 0xff);
  }
  write_raw(path, img.h, img.w, 16, PNG_COLOR_TYPE_GRAY, bytes.data(),
            static_cast<std::size_t>(img.w) * 2);
}

void write_gray8_png(const std::string& path, const Gray8Image& img) {
  write_raw(path, img.h, img.w, 8, PNG_COLOR_TYPE_GRAY, img.data.data(),
            static_cast<std::size_t>(img.w));
}

const std::array<std::array<std::uint8_t, 3>, 256>& class_color_table() {
  static const auto table = [] {
    std::array<std::array<std::uint8_t, 3>, 256> t{};
    for (int i = 0; i < 256; ++i) {
      int r = 0, g = 0, b = 0, c = i;
      for (int j = 0; j < 8; ++j) {
        r |= ((c >> 0) & 1) << (7 - j);
        g |= ((c >> 1) & 1) << (7 - j);
        b |= ((c >> 2) & 1) << (7 - j);
        c >>= 3;
      }
      t[static_cast<std::size_t>(i)] = {static_cast<std::uint8_t>(r),
                                        static_cast<std::uint8_t>(g),
                                        static_cast<std::uint8_t>(b)};
    }
    return t;
  }();
  return table;
}

RgbImage colorize_labels(const Gray8Image& labels) {
  const auto& table = class_color_table();
  RgbImage out(labels.h, labels.w);
  for (int y = 0; y < labels.h; ++y) {
    for (int x = 0; x < labels.w; ++x) {
      const auto& rgb = table[labels.at(y, x)];
      out.at(y, x, 0) = rgb[0];
      out.at(y, x, 1) = rgb[1];
      out.at(y, x, 2) = rgb[2];
    }
  }
  return out;
}

}  // namespace acnet
