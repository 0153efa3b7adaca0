#include <gtest/gtest.h>

#include <random>
#include <string>

#include "addsl/imaging.hpp"
#include "oracles.hpp"

using addsl::Box;
using addsl::Raster;
using addsl::ResizeMode;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

Raster random_raster(std::mt19937_64& rng, int w, int h, int ch) {
  Raster r(w, h, ch);
  for (auto& v : r.data()) v = static_cast<std::uint8_t>(oracle::uniform_int(rng, 0, 255));
  return r;
}

addsl::ErrorCode read_error(const std::string& s) {
  try {
    addsl::read_image(bytes_of(s));
  } catch (const addsl::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "accepted bad image";
  return addsl::ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Netpbm, DecodesP5) {
  const auto img = addsl::read_image(bytes_of(std::string("P5\n2 2\n255\n") + std::string("\x00\x40\x80\xff", 4)));
  EXPECT_EQ(img, Raster(2, 2, 1, {0, 64, 128, 255}));
}

TEST(Netpbm, HeaderCommentsAndNormalizedWrite) {
  const std::string src = std::string("P6 # rgb\n# size\n1  1\t255\n") + "\x01\x02\x03";
  const auto img = addsl::read_image(bytes_of(src));
  EXPECT_EQ(img, Raster(1, 1, 3, {1, 2, 3}));
  const auto out = addsl::write_image(img);
  EXPECT_EQ(std::string(out.begin(), out.end()), std::string("P6\n1 1\n255\n") + "\x01\x02\x03");
}

TEST(Netpbm, Errors) {
  EXPECT_EQ(read_error("P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00"), addsl::ErrorCode::UnsupportedFormat);
  EXPECT_EQ(read_error("P3\n1 1\n255\n0 0 0\n"), addsl::ErrorCode::UnsupportedFormat);
  EXPECT_EQ(read_error("GIF89a"), addsl::ErrorCode::UnsupportedFormat);
  EXPECT_EQ(read_error("P5\n2 2\n255\n\x01"), addsl::ErrorCode::TruncatedData);
  EXPECT_EQ(read_error("P5\n0 2\n255\n"), addsl::ErrorCode::BadHeader);
  EXPECT_EQ(read_error("P5\nx 2\n255\n"), addsl::ErrorCode::BadHeader);
}

TEST(NetpbmProperties, WriteReadWriteIsByteIdentical) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto img = random_raster(rng, oracle::uniform_int(rng, 1, 17), oracle::uniform_int(rng, 1, 17),
                                   t % 2 ? 3 : 1);
    const auto bytes = addsl::write_image(img);
    const auto back = addsl::read_image(bytes);
    ASSERT_EQ(back, img);
    ASSERT_EQ(addsl::write_image(back), bytes);
  }
}

TEST(Grayscale, Examples) {
  EXPECT_EQ(addsl::to_grayscale(Raster(1, 1, 3, {255, 0, 0})).at(0, 0), 76);
  EXPECT_EQ(addsl::to_grayscale(Raster(1, 1, 3, {0, 255, 0})).at(0, 0), 150);
  EXPECT_EQ(addsl::to_grayscale(Raster(1, 1, 3, {0, 0, 255})).at(0, 0), 29);
  for (int v = 0; v < 256; ++v) {
    const auto u = static_cast<std::uint8_t>(v);
    ASSERT_EQ(addsl::to_grayscale(Raster(1, 1, 3, {u, u, u})).at(0, 0), v);
  }
  const Raster g(2, 1, 1, {9, 200});
  EXPECT_EQ(addsl::to_grayscale(g), g);
}

TEST(Grayscale, MatchesRoundedLuma) {
  std::mt19937_64 rng(4);
  const auto img = random_raster(rng, 64, 64, 3);
  const auto g = addsl::to_grayscale(img);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const double luma = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      ASSERT_EQ(g.at(x, y), static_cast<int>(std::floor(luma + 0.5 + 1e-9)));
    }
  }
}

TEST(Resize, IdentityAndConstant) {
  std::mt19937_64 rng(6);
  const auto img = random_raster(rng, 7, 5, 3);
  EXPECT_EQ(addsl::resize(img, 7, 5, ResizeMode::Nearest), img);
  EXPECT_EQ(addsl::resize(img, 7, 5, ResizeMode::Bilinear), img);
  Raster flat(13, 9, 1);
  for (auto& v : flat.data()) v = 77;
  for (auto mode : {ResizeMode::Nearest, ResizeMode::Bilinear}) {
    const auto out = addsl::resize(flat, 416, 416, mode);
    for (auto v : out.data()) ASSERT_EQ(v, 77);
  }
}

TEST(Resize, NearestCheckerboard) {
  const Raster board(2, 2, 1, {0, 255, 255, 0});
  const auto out = addsl::resize(board, 4, 4, ResizeMode::Nearest);
  const Raster want(4, 4, 1, {0, 0, 255, 255, 0, 0, 255, 255, 255, 255, 0, 0, 255, 255, 0, 0});
  EXPECT_EQ(out, want);
}

TEST(Resize, NearestIndexFormula) {
  std::mt19937_64 rng(8);
  const auto img = random_raster(rng, 11, 7, 1);
  const auto out = addsl::resize(img, 5, 16, ResizeMode::Nearest);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 5; ++x) {
      const int sx = static_cast<int>(std::floor((x + 0.5) * 11 / 5));
      const int sy = static_cast<int>(std::floor((y + 0.5) * 7 / 16));
      ASSERT_EQ(out.at(x, y), img.at(sx, sy));
    }
  }
}

TEST(Resize, BilinearHalfPixel) {
  // 2 -> 4: samples at source coordinates -0.25(clamped), 0.25, 0.75, 1.25(clamped)
  const Raster row(2, 1, 1, {0, 100});
  const auto out = addsl::resize(row, 4, 1, ResizeMode::Bilinear);
  EXPECT_EQ(out, Raster(4, 1, 1, {0, 25, 75, 100}));
  // halves round up
  const Raster pair(2, 1, 1, {0, 1});
  EXPECT_EQ(addsl::resize(pair, 1, 1, ResizeMode::Bilinear).at(0, 0), 1);
}

TEST(Rotate, IndexMap) {
  const Raster ab(2, 1, 1, {'a', 'b'});
  const auto r = addsl::rotate_quarter(ab, 1);
  EXPECT_EQ(r, Raster(1, 2, 1, {'a', 'b'}));
  EXPECT_EQ(addsl::rotate_quarter(ab, 0), ab);
  EXPECT_EQ(addsl::rotate_quarter(ab, 2), Raster(2, 1, 1, {'b', 'a'}));
  EXPECT_THROW(addsl::rotate_quarter(ab, 4), addsl::Error);
}

TEST(Rotate, ClockwiseFormula) {
  std::mt19937_64 rng(9);
  const auto img = random_raster(rng, 5, 3, 3);
  const auto r = addsl::rotate_quarter(img, 1);
  ASSERT_EQ(r.width(), 3);
  ASSERT_EQ(r.height(), 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) ASSERT_EQ(r.at(x, y, c), img.at(y, 3 - 1 - x, c));
}

TEST(RotateProperties, GroupLaws) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 50; ++t) {
    const auto img = random_raster(rng, oracle::uniform_int(rng, 1, 9), oracle::uniform_int(rng, 1, 9), 1);
    for (int k = 0; k < 4; ++k) {
      ASSERT_EQ(addsl::rotate_quarter(addsl::rotate_quarter(img, k), (4 - k) % 4), img);
    }
    auto r = img;
    for (int k = 0; k < 4; ++k) r = addsl::rotate_quarter(r, 1);
    ASSERT_EQ(r, img);
    ASSERT_EQ(addsl::rotate_quarter(addsl::rotate_quarter(img, 1), 2), addsl::rotate_quarter(img, 3));
  }
}

TEST(RotateBox, Examples) {
  const Box b(0.2, 0.4, 0.1, 0.3);
  const auto r1 = addsl::rotate_box(b, 1);
  EXPECT_NEAR(r1.cx(), 0.6, 1e-15);
  EXPECT_NEAR(r1.cy(), 0.2, 1e-15);
  EXPECT_NEAR(r1.w(), 0.3, 1e-15);
  EXPECT_NEAR(r1.h(), 0.1, 1e-15);
  const auto r2 = addsl::rotate_box(b, 2);
  EXPECT_NEAR(r2.cx(), 0.8, 1e-15);
  EXPECT_NEAR(r2.cy(), 0.6, 1e-15);
  EXPECT_EQ(addsl::rotate_box(b, 0), b);
}

TEST(RotateBoxProperties, ComposesAndMatchesPixelMask) {
  std::mt19937_64 rng(12);
  const int n = 64;
  for (int t = 0; t < 500; ++t) {
    const Box b = oracle::random_box(rng, 2.0 / n, 1.0);
    const auto r11 = addsl::rotate_box(addsl::rotate_box(b, 1), 1);
    const auto r2 = addsl::rotate_box(b, 2);
    ASSERT_NEAR(r11.cx(), r2.cx(), 1e-12);
    ASSERT_NEAR(r11.cy(), r2.cy(), 1e-12);
    ASSERT_NEAR(r11.w(), r2.w(), 1e-12);
    const auto mask = oracle::rasterize(b, n);
    for (int k = 0; k < 4; ++k) {
      const auto e = oracle::extent(addsl::rotate_quarter(mask, k));
      ASSERT_GE(e.x1, e.x0);
      ASSERT_LE(oracle::edge_gap(addsl::rotate_box(b, k), e, n), 1.0 / n) << "box " << t << " turns " << k;
    }
  }
}

TEST(SelectFrames, Examples) {
  EXPECT_EQ(addsl::select_frames(150, addsl::default_frame_policy()), (std::vector<int>{50, 60, 70, 80, 90, 100}));
  try {
    addsl::select_frames(60, addsl::default_frame_policy());
    FAIL();
  } catch (const addsl::Error& e) {
    EXPECT_EQ(e.code(), addsl::ErrorCode::IndexOutOfRange);
  }
  EXPECT_EQ(addsl::select_frames(150, std::vector<int>{0}), std::vector<int>{0});
  EXPECT_EQ(addsl::select_frames(10, std::vector<int>{7, 2, 7}), (std::vector<int>{2, 7}));
  EXPECT_THROW(addsl::select_frames(0, addsl::default_frame_policy()), addsl::Error);
}
