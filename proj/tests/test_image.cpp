#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "../vendor/doctest.h"
#include "acnet/image.hpp"
#include "acnet/rng.hpp"

namespace fs = std::filesystem;
using namespace acnet;

namespace {

// Unique scratch directory, removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("acnet_img_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("png: rgb images survive a write/read round trip") {
  TempDir tmp;
  Rng rng(31);
  RgbImage img(13, 9);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(256));
  write_rgb_png(tmp.file("a.png"), img);
  const RgbImage back = read_rgb_png(tmp.file("a.png"));
  CHECK(back.h == 13);
  CHECK(back.w == 9);
  CHECK(back.data == img.data);
}

TEST_CASE("png: 16-bit grays keep full-range values intact") {
  TempDir tmp;
  Gray16Image img(4, 5);
  // Values straddling both bytes expose any byte-order mistake.
  const std::uint16_t probes[] = {0, 1, 255, 256, 1500, 40000, 65535};
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = probes[i % 7];
  write_gray16_png(tmp.file("d.png"), img);
  const Gray16Image back = read_gray16_png(tmp.file("d.png"));
  CHECK(back.h == 4);
  CHECK(back.w == 5);
  CHECK(back.data == img.data);
}

TEST_CASE("png: 8-bit grays round trip") {
  TempDir tmp;
  Gray8Image img(3, 7);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 13);
  write_gray8_png(tmp.file("l.png"), img);
  const Gray8Image back = read_gray8_png(tmp.file("l.png"));
  CHECK(back.data == img.data);
}

TEST_CASE("png: readers refuse the wrong layout instead of converting") {
  TempDir tmp;
  RgbImage rgb(2, 2);
  write_rgb_png(tmp.file("rgb.png"), rgb);
  Gray8Image g8(2, 2);
  write_gray8_png(tmp.file("g8.png"), g8);
  Gray16Image g16(2, 2);
  write_gray16_png(tmp.file("g16.png"), g16);

  CHECK_THROWS_WITH_AS(read_gray16_png(tmp.file("rgb.png")),
                       doctest::Contains("expected a 16-bit"), std::runtime_error);
  CHECK_THROWS_WITH_AS(read_rgb_png(tmp.file("g8.png")), doctest::Contains("expected an 8-bit"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(read_gray8_png(tmp.file("g16.png")), doctest::Contains("expected an 8-bit"),
                       std::runtime_error);
  CHECK_THROWS_AS(read_gray16_png(tmp.file("g8.png")), std::runtime_error);
}

TEST_CASE("png: unreadable and non-png files are reported") {
  TempDir tmp;
  CHECK_THROWS_WITH_AS(read_rgb_png(tmp.file("missing.png")), doctest::Contains("cannot open"),
                       std::runtime_error);
  std::ofstream junk(tmp.file("junk.png"), std::ios::binary);
  junk << "this is not a png";
  junk.close();
  CHECK_THROWS_WITH_AS(read_rgb_png(tmp.file("junk.png")),
                       doctest::Contains("not a readable PNG"), std::runtime_error);
}

TEST_CASE("color table: frozen low entries and distinctness") {
  const auto& t = class_color_table();
  CHECK(t[0] == std::array<std::uint8_t, 3>{0, 0, 0});
  CHECK(t[1] == std::array<std::uint8_t, 3>{128, 0, 0});
  CHECK(t[2] == std::array<std::uint8_t, 3>{0, 128, 0});
  CHECK(t[3] == std::array<std::uint8_t, 3>{128, 128, 0});
  CHECK(t[4] == std::array<std::uint8_t, 3>{0, 0, 128});
  CHECK(t[5] == std::array<std::uint8_t, 3>{128, 0, 128});
  CHECK(t[6] == std::array<std::uint8_t, 3>{0, 128, 128});
  CHECK(t[7] == std::array<std::uint8_t, 3>{128, 128, 128});
  CHECK(t[8] == std::array<std::uint8_t, 3>{64, 0, 0});
  for (int i = 0; i < 32; ++i) {
    for (int j = i + 1; j < 32; ++j) {
      CHECK(t[static_cast<std::size_t>(i)] != t[static_cast<std::size_t>(j)]);
    }
  }
}

TEST_CASE("colorize: every id maps through the table") {
  Gray8Image labels(2, 3);
  labels.data = {0, 1, 2, 3, 4, 5};
  const RgbImage out = colorize_labels(labels);
  const auto& t = class_color_table();
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 3; ++x) {
      const auto& want = t[labels.at(y, x)];
      CHECK(out.at(y, x, 0) == want[0]);
      CHECK(out.at(y, x, 1) == want[1]);
      CHECK(out.at(y, x, 2) == want[2]);
    }
  }
}
