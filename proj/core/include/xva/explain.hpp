#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xva/autoencoder.hpp"
#include "xva/classifier.hpp"

namespace xva {

struct TemporalSaliency {
  std::vector<double> values;     // length T' (last conv resolution)
  std::vector<double> upsampled;  // length T (input sequence)
  int class_index = 0;
  bool rectified = false;
};

struct TemporalGradcam {
  TemporalSaliency raw;
  TemporalSaliency rectified;
};

/// w_k = mean_i grad[i, k] for a T' x K activation gradient.
std::vector<double> gradcam_weights(const Tensor64& grad);
/// L_i = sum_k w_k A[i, k].
std::vector<double> gradcam_map(const Tensor64& activations, std::span<const double> weights);

/// Linear interpolation onto `length` samples with aligned end points.
std::vector<double> upsample_linear(std::span<const double> values, std::size_t length);

/// Saliency over the classifier's last Conv1D activations (after ReLU,
/// before SE) for the pre-softmax logit of `class_index`.
template <typename T>
TemporalGradcam temporal_gradcam(const ClassifierModel<T>& model,
                                 const MultiViewSample<T>& sample, int class_index);

struct SpatialSaliency {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major, input resolution
  std::size_t map_height = 0;  // resolution of the tapped encoder layer
  std::size_t map_width = 0;
  int class_index = 0;
};

/// Frame-level saliency: d logit / d (feature row t of view `view_index`)
/// chained through the encoder to the output of encoder conv `layer`
/// (0-based, default the last one). Weights are the spatial mean of that
/// gradient per channel; the map is the rectified weighted channel sum,
/// bilinearly upsampled to the frame size. `frame` is the preprocessed
/// frame t of that view.
template <typename T>
SpatialSaliency spatial_gradcam(const AEModel<T>& ae, const ClassifierModel<T>& clf,
                                const MultiViewSample<T>& sample, std::size_t view_index,
                                const BasicTensor<T>& frame, std::size_t frame_index,
                                int class_index, std::size_t layer = kEncoderDepth - 1);

enum class SaliencyFormat { kCsv, kPgm };

/// CSV: one "index,value" line per entry. PGM: binary P5 of the given
/// extent, min-max scaled to 0..255 (a constant map becomes 128).
void export_saliency(std::span<const double> values, std::size_t height, std::size_t width,
                     const std::filesystem::path& path, SaliencyFormat format);
void export_saliency(const TemporalSaliency& s, const std::filesystem::path& path,
                     SaliencyFormat format);
void export_saliency(const SpatialSaliency& s, const std::filesystem::path& path,
                     SaliencyFormat format);

std::string saliency_csv(std::span<const double> values);
std::vector<std::uint8_t> saliency_pgm(std::span<const double> values, std::size_t height,
                                       std::size_t width);
std::vector<double> read_saliency_csv(const std::filesystem::path& path);

/// "{trial}.{view}.{class}.saliency.{csv|pgm}"
std::string saliency_filename(const std::string& trial_id, const std::string& view,
                              int class_index, SaliencyFormat format);

}  // namespace xva
