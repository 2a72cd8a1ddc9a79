#include "xva/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "xva/error.hpp"
#include "xva/io.hpp"

namespace xva {

namespace {

class PpmHeaderParser {
 public:
  PpmHeaderParser(std::span<const std::uint8_t> bytes, const std::string& name)
      : bytes_(bytes), name_(name) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) fail("header value too large");
    }
    if (digits == 0) fail("malformed PPM header");
    return v;
  }

  void expect_magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '6') {
      fail("not a binary PPM (expected P6 magic)");
    }
    pos_ = 2;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("malformed PPM header");
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(name_ + ": " + what);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  const std::string& name_;
  std::size_t pos_ = 0;
};

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes, const std::string& source_name) {
  PpmHeaderParser p(bytes, source_name);
  p.expect_magic();
  RgbImage img;
  img.width = p.number();
  img.height = p.number();
  const std::size_t maxval = p.number();
  if (img.width == 0 || img.height == 0) p.fail("zero image extent");
  if (maxval == 0 || maxval > 255) p.fail("unsupported maxval " + std::to_string(maxval));
  const std::size_t offset = p.raster_offset();
  const std::size_t need = img.width * img.height * 3;
  if (bytes.size() - offset < need) p.fail("truncated pixel data");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                    bytes.begin() + static_cast<std::ptrdiff_t>(offset + need));
  if (maxval != 255) {
    for (auto& v : img.pixels) {
      v = static_cast<std::uint8_t>(std::lround(std::min<double>(v, maxval) * 255.0 /
                                                static_cast<double>(maxval)));
    }
  }
  return img;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("frame not found: " + path.string());
  return decode_ppm(io::read_file(path), path.string());
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  if (image.pixels.size() != image.width * image.height * 3) {
    throw ShapeError("RGB image pixel buffer does not match its extent");
  }
  const std::string header = "P6\n" + std::to_string(image.width) + " " +
                             std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  io::write_file_atomic(path, encode_ppm(image));
}

template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& image, std::size_t height,
                               std::size_t width) {
  require_rank(image, 3, "resize_bilinear input");
  if (height == 0 || width == 0) throw ShapeError("resize_bilinear: zero target extent");
  const std::size_t C = image.dim(0);
  const std::size_t H = image.dim(1);
  const std::size_t W = image.dim(2);
  if (H == height && W == width) return image;

  struct Tap {
    std::size_t i0, i1;
    T frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, static_cast<T>(src - static_cast<double>(i0))};
    }
    return t;
  };
  const auto ty = taps(H, height);
  const auto tx = taps(W, width);

  BasicTensor<T> out({C, height, width});
  for (std::size_t c = 0; c < C; ++c) {
    const T* src = image.ptr() + c * H * W;
    T* dst = out.ptr() + c * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const auto& a = ty[y];
      for (std::size_t x = 0; x < width; ++x) {
        const auto& b = tx[x];
        const T top = src[a.i0 * W + b.i0] * (T(1) - b.frac) + src[a.i0 * W + b.i1] * b.frac;
        const T bot = src[a.i1 * W + b.i0] * (T(1) - b.frac) + src[a.i1 * W + b.i1] * b.frac;
        dst[y * width + x] = top * (T(1) - a.frac) + bot * a.frac;
      }
    }
  }
  return out;
}

Tensor preprocess_frame(const RgbImage& image, std::size_t height, std::size_t width) {
  if (image.pixels.size() != image.width * image.height * 3 || image.pixels.empty()) {
    throw ShapeError("RGB image pixel buffer does not match its extent");
  }
  Tensor chw({3, image.height, image.width});
  const std::size_t plane = image.height * image.width;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      chw[c * plane + i] = static_cast<float>(image.pixels[i * 3 + c]) / 127.5f - 1.0f;
    }
  }
  return resize_bilinear(chw, height, width);
}

RgbImage tensor_to_image(const Tensor& frame) {
  require_rank(frame, 3, "tensor_to_image input");
  if (frame.dim(0) != 3) throw ShapeError("tensor_to_image expects 3 channels");
  RgbImage img;
  img.height = frame.dim(1);
  img.width = frame.dim(2);
  const std::size_t plane = img.height * img.width;
  img.pixels.resize(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = (static_cast<double>(frame[c * plane + i]) + 1.0) * 127.5;
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  }
  return img;
}

template <typename T>
BasicTensor<T> add_noise(const BasicTensor<T>& frame, double sigma, Rng& rng) {
  if (sigma < 0) throw ConfigError("noise sigma must be non-negative");
  BasicTensor<T> out = frame;
  if (sigma == 0) return out;
  for (auto& v : out.data()) v += static_cast<T>(rng.gaussian(0.0, sigma));
  return out;
}

template BasicTensor<float> resize_bilinear(const BasicTensor<float>&, std::size_t, std::size_t);
template BasicTensor<double> resize_bilinear(const BasicTensor<double>&, std::size_t, std::size_t);
template BasicTensor<float> add_noise(const BasicTensor<float>&, double, Rng&);
template BasicTensor<double> add_noise(const BasicTensor<double>&, double, Rng&);

}  // namespace xva
