#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xva/rng.hpp"
#include "xva/tensor.hpp"

namespace xva {

/// 8-bit interleaved RGB image as stored in a binary PPM (P6).
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3
};

/// Parse a binary P6 PPM with maxval <= 255. Header comments are allowed.
RgbImage read_ppm(const std::filesystem::path& path);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes,
                    const std::string& source_name);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);

/// Bilinear resize of a C x H x W tensor using half-pixel centres
/// (src = (dst + 0.5) * in / out - 0.5, clamped at the borders). A resize
/// to the same extent reproduces the input exactly.
template <typename T>
BasicTensor<T> resize_bilinear(const BasicTensor<T>& image, std::size_t height,
                               std::size_t width);

/// RGB image -> 3 x height x width tensor, bilinear-resized, with pixel
/// values mapped from [0, 255] to [-1, 1].
Tensor preprocess_frame(const RgbImage& image, std::size_t height,
                        std::size_t width);

/// Inverse value mapping for writing frames back out (clamped).
RgbImage tensor_to_image(const Tensor& frame);

/// frame + N(0, sigma^2) per element, unclamped.
template <typename T>
BasicTensor<T> add_noise(const BasicTensor<T>& frame, double sigma, Rng& rng);

}  // namespace xva
