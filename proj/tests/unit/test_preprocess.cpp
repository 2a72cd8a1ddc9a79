#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "xva/error.hpp"
#include "xva/preprocess.hpp"

namespace xva {
namespace {

namespace fs = std::filesystem;

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

RgbImage gradient_image(std::size_t w, std::size_t h) {
  RgbImage img{w, h, std::vector<std::uint8_t>(w * h * 3)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      auto* p = &img.pixels[(y * w + x) * 3];
      p[0] = static_cast<std::uint8_t>(x * 255 / (w - 1));
      p[1] = static_cast<std::uint8_t>(y * 255 / (h - 1));
      p[2] = static_cast<std::uint8_t>((x + y) % 256);
    }
  return img;
}

// --- PPM ------------------------------------------------------------------------

TEST(Ppm, RoundTrip) {
  const auto img = gradient_image(7, 5);
  const auto bytes = encode_ppm(img);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 11), "P6\n7 5\n255\n");
  const auto back = decode_ppm(bytes, "mem");
  EXPECT_EQ(back.width, 7u);
  EXPECT_EQ(back.height, 5u);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Ppm, CommentsAndWhitespaceInHeader) {
  auto bytes = bytes_of("P6 # made by hand\n2\t1 # size\n255\n");
  for (int i = 0; i < 6; ++i) bytes.push_back(static_cast<std::uint8_t>(i * 40));
  const auto img = decode_ppm(bytes, "mem");
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.pixels[5], 200);
}

TEST(Ppm, SmallMaxvalIsRescaled) {
  auto bytes = bytes_of("P6\n1 1\n15\n");
  bytes.insert(bytes.end(), {0, 15, 5});
  const auto img = decode_ppm(bytes, "mem");
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255, 85}));
}

TEST(Ppm, MalformedInputsNameTheSource) {
  const std::vector<std::string> bad = {
      "",                  // empty
      "P3\n1 1\n255\n",    // ASCII variant
      "P6\n0 1\n255\n",    // zero width
      "P6\n1 1\n65535\n",  // 16-bit
      "P6\n1 x\n255\n",    // junk
      "P6\n2 2\n255\nabc", // truncated payload
  };
  for (const auto& s : bad) {
    try {
      decode_ppm(bytes_of(s), "frame_007.ppm");
      ADD_FAILURE() << "accepted: " << s;
    } catch (const IoError& e) {
      EXPECT_NE(std::string(e.what()).find("frame_007.ppm"), std::string::npos) << e.what();
    }
  }
}

TEST(Ppm, FileRoundTripAndMissingFile) {
  const auto dir = fs::temp_directory_path() / "xva_ppm_test";
  fs::create_directories(dir);
  const auto img = gradient_image(4, 3);
  write_ppm(dir / "a.ppm", img);
  EXPECT_EQ(read_ppm(dir / "a.ppm").pixels, img.pixels);
  EXPECT_THROW(read_ppm(dir / "missing.ppm"), IoError);
}

// --- preprocessing ----------------------------------------------------------------

TEST(Preprocess, VgaFrameToTargetRange) {
  const auto t = preprocess_frame(gradient_image(640, 480), 256, 256);
  EXPECT_EQ(t.shape(), (Shape{3, 256, 256}));
  float lo = 1, hi = -1;
  for (float v : t.data()) lo = std::min(lo, v), hi = std::max(hi, v);
  EXPECT_GE(lo, -1.0f);
  EXPECT_LE(hi, 1.0f);
  // Red ramps left to right across the resized frame.
  EXPECT_LT(t.at(0, 128, 0), t.at(0, 128, 255));
}

TEST(Preprocess, BlackIsMinusOneWhiteIsOne) {
  RgbImage black{5, 4, std::vector<std::uint8_t>(60, 0)};
  const auto b = preprocess_frame(black, 8, 8);
  for (float v : b.data()) EXPECT_EQ(v, -1.0f);
  RgbImage white{5, 4, std::vector<std::uint8_t>(60, 255)};
  const auto w = preprocess_frame(white, 3, 9);
  for (float v : w.data()) EXPECT_EQ(v, 1.0f);
}

TEST(Preprocess, ChannelOrderIsRgb) {
  RgbImage px{1, 1, {255, 0, 0}};
  const auto t = preprocess_frame(px, 1, 1);
  EXPECT_EQ(t[0], 1.0f);
  EXPECT_EQ(t[1], -1.0f);
  EXPECT_EQ(t[2], -1.0f);
}

TEST(Preprocess, ImageRoundTripThroughTensor) {
  const auto img = gradient_image(9, 6);
  EXPECT_EQ(tensor_to_image(preprocess_frame(img, 6, 9)).pixels, img.pixels);
}

TEST(ResizeBilinear, IdentityAtSameExtent) {
  Rng rng(1);
  Tensor x({3, 11, 7});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform(-1, 1));
  const auto y = resize_bilinear(x, 11, 7);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-6);
}

TEST(ResizeBilinear, ConstantStaysConstantAndHalfPixelOracle) {
  const Tensor64 c({1, 4, 4}, 0.25);
  const auto r = resize_bilinear(c, 9, 3);
  for (double v : r.data()) EXPECT_NEAR(v, 0.25, 1e-15);

  // 1 x 1 x 2 -> 1 x 1 x 4: src = (dst + 0.5) / 2 - 0.5 = -0.25, 0.25, 0.75, 1.25.
  const Tensor64 x({1, 1, 2}, std::vector<double>{0.0, 4.0});
  const auto y = resize_bilinear(x, 1, 4);
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[1], 1.0);
  EXPECT_DOUBLE_EQ(y[2], 3.0);
  EXPECT_DOUBLE_EQ(y[3], 4.0);
  EXPECT_THROW(resize_bilinear(x, 0, 4), ShapeError);
}

// --- noise ----------------------------------------------------------------------

TEST(AddNoise, ZeroSigmaIsIdentity) {
  Rng rng(2);
  const auto frame = preprocess_frame(gradient_image(6, 6), 6, 6);
  EXPECT_EQ(add_noise(frame, 0.0, rng), frame);
  EXPECT_THROW(add_noise(frame, -0.1, rng), ConfigError);
}

TEST(AddNoise, DeterministicUnderSeedAndUnclamped) {
  const Tensor frame({3, 8, 8}, 1.0f);
  Rng a(3), b(3);
  const auto na = add_noise(frame, 0.5, a);
  EXPECT_EQ(na, add_noise(frame, 0.5, b));
  bool above = false;
  for (float v : na.data()) above |= v > 1.0f;
  EXPECT_TRUE(above);
}

TEST(AddNoise, EmpiricalStdWithinOnePercent) {
  const Tensor64 zero({1, 1000, 1000});
  Rng rng(4);
  const double sigma = 0.3;
  const auto n = add_noise(zero, sigma, rng);
  double sum = 0, ss = 0;
  for (double v : n.data()) sum += v, ss += v * v;
  const double mean = sum / 1e6;
  const double sd = std::sqrt(ss / 1e6 - mean * mean);
  EXPECT_LT(std::abs(sd - sigma), 0.01 * sigma);
  EXPECT_LT(std::abs(mean), 0.002);
}

}  // namespace
}  // namespace xva
