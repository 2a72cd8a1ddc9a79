#include "xva/explain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "xva/error.hpp"
#include "xva/io.hpp"
#include "xva/ops.hpp"
#include "xva/preprocess.hpp"

namespace xva {

namespace {

void check_class(int class_index) {
  if (class_index != 0 && class_index != 1) {
    throw UsageError("class index must be 0 or 1, got " + std::to_string(class_index));
  }
}

template <typename T>
BasicTensor<T> one_hot_logit(int class_index) {
  BasicTensor<T> g({2});
  g[static_cast<std::size_t>(class_index)] = T(1);
  return g;
}

}  // namespace

std::vector<double> gradcam_weights(const Tensor64& grad) {
  require_rank(grad, 2, "gradcam gradient");
  const std::size_t n = grad.dim(0);
  const std::size_t K = grad.dim(1);
  std::vector<double> w(K, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < K; ++k) w[k] += grad[i * K + k];
  }
  for (auto& v : w) v /= static_cast<double>(n);
  return w;
}

std::vector<double> gradcam_map(const Tensor64& activations, std::span<const double> weights) {
  require_rank(activations, 2, "gradcam activations");
  const std::size_t n = activations.dim(0);
  const std::size_t K = activations.dim(1);
  if (weights.size() != K) throw ShapeError("gradcam weights do not match channel count");
  std::vector<double> L(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < K; ++k) L[i] += weights[k] * activations[i * K + k];
  }
  return L;
}

std::vector<double> upsample_linear(std::span<const double> values, std::size_t length) {
  if (values.empty()) throw UsageError("upsample_linear: empty input");
  if (length == values.size()) return {values.begin(), values.end()};
  std::vector<double> out(length);
  if (values.size() == 1 || length == 1) {
    std::fill(out.begin(), out.end(), values.front());
    return out;
  }
  const double scale =
      static_cast<double>(values.size() - 1) / static_cast<double>(length - 1);
  for (std::size_t i = 0; i < length; ++i) {
    const double src = static_cast<double>(i) * scale;
    const auto i0 = std::min(static_cast<std::size_t>(src), values.size() - 2);
    const double f = src - static_cast<double>(i0);
    out[i] = values[i0] * (1.0 - f) + values[i0 + 1] * f;
  }
  return out;
}

template <typename T>
TemporalGradcam temporal_gradcam(const ClassifierModel<T>& model,
                                 const MultiViewSample<T>& sample, int class_index) {
  check_class(class_index);
  ClassifierTape<T> tape;
  model.forward(sample, tape);
  const auto grads = model.input_gradients(tape, one_hot_logit<T>(class_index));

  const auto& A = tape.post.act;
  const auto w = gradcam_weights(grads.last_conv.template cast<double>());
  const auto L = gradcam_map(A.template cast<double>(), w);
  const std::size_t len = sample.views.front().features.dim(0);

  TemporalGradcam out;
  out.raw = {L, upsample_linear(L, len), class_index, false};
  std::vector<double> rect(L.size());
  std::transform(L.begin(), L.end(), rect.begin(), [](double v) { return std::max(v, 0.0); });
  out.rectified = {rect, upsample_linear(rect, len), class_index, true};
  return out;
}

template <typename T>
SpatialSaliency spatial_gradcam(const AEModel<T>& ae, const ClassifierModel<T>& clf,
                                const MultiViewSample<T>& sample, std::size_t view_index,
                                const BasicTensor<T>& frame, std::size_t frame_index,
                                int class_index, std::size_t layer) {
  check_class(class_index);
  if (view_index >= sample.views.size()) throw UsageError("view index out of range");
  const auto& feats = sample.views[view_index].features;
  if (feats.empty() || frame_index >= feats.dim(0)) {
    throw UsageError("frame index " + std::to_string(frame_index) + " out of range");
  }
  if (layer >= kEncoderDepth) throw UsageError("encoder layer index out of range");
  const auto& cfg = ae.config();
  require_shape(frame, {3, cfg.height, cfg.width}, "spatial_gradcam frame");

  ClassifierTape<T> tape;
  clf.forward(sample, tape);
  const auto grads = clf.input_gradients(tape, one_hot_logit<T>(class_index));
  const std::size_t nz = feats.dim(1);
  BasicTensor<T> grad_code({nz});
  std::copy_n(grads.inputs[view_index].ptr() + frame_index * nz, nz, grad_code.ptr());

  EncoderTape<T> etape;
  ae.encode(frame, etape);
  const auto gA = ae.encoder_activation_gradient(etape, grad_code, layer);
  const auto& A = etape.post[layer];
  const std::size_t C = A.dim(0);
  const std::size_t h = A.dim(1);
  const std::size_t w = A.dim(2);
  const std::size_t plane = h * w;

  Tensor64 map({1, h, w});
  for (std::size_t c = 0; c < C; ++c) {
    double wc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) wc += static_cast<double>(gA[c * plane + i]);
    wc /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      map[i] += wc * static_cast<double>(A[c * plane + i]);
    }
  }
  for (auto& v : map.data()) v = std::max(v, 0.0);

  const auto up = resize_bilinear(map, cfg.height, cfg.width);
  SpatialSaliency s;
  s.height = cfg.height;
  s.width = cfg.width;
  s.values.assign(up.data().begin(), up.data().end());
  s.map_height = h;
  s.map_width = w;
  s.class_index = class_index;
  return s;
}

std::string saliency_csv(std::span<const double> values) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, values[i]);
    out.append(buf, p);
    out += '\n';
  }
  return out;
}

std::vector<std::uint8_t> saliency_pgm(std::span<const double> values, std::size_t height,
                                       std::size_t width) {
  if (height * width != values.size() || values.empty()) {
    throw ShapeError("saliency_pgm: extent does not match value count");
  }
  const std::string header =
      "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  for (double v : values) {
    if (!(range > 0.0)) {
      out.push_back(128);
    } else {
      out.push_back(static_cast<std::uint8_t>(std::lround((v - *lo) / range * 255.0)));
    }
  }
  return out;
}

void export_saliency(std::span<const double> values, std::size_t height, std::size_t width,
                     const std::filesystem::path& path, SaliencyFormat format) {
  if (format == SaliencyFormat::kCsv) {
    io::write_text_atomic(path, saliency_csv(values));
  } else {
    io::write_file_atomic(path, saliency_pgm(values, height, width));
  }
}

void export_saliency(const TemporalSaliency& s, const std::filesystem::path& path,
                     SaliencyFormat format) {
  export_saliency(s.upsampled, 1, s.upsampled.size(), path, format);
}

void export_saliency(const SpatialSaliency& s, const std::filesystem::path& path,
                     SaliencyFormat format) {
  export_saliency(s.values, s.height, s.width, path, format);
}

std::vector<double> read_saliency_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comma = line.find(',');
    std::size_t index = 0;
    double v = 0.0;
    const char* end = line.data() + line.size();
    bool ok = comma != std::string::npos;
    if (ok) {
      auto r1 = std::from_chars(line.data(), line.data() + comma, index);
      auto r2 = std::from_chars(line.data() + comma + 1, end, v);
      ok = r1.ec == std::errc() && r1.ptr == line.data() + comma && r2.ec == std::errc() &&
           r2.ptr == end && index == values.size();
    }
    if (!ok) {
      throw IoError(path.string() + ": malformed saliency row " + std::to_string(lineno));
    }
    values.push_back(v);
  }
  return values;
}

std::string saliency_filename(const std::string& trial_id, const std::string& view,
                              int class_index, SaliencyFormat format) {
  return trial_id + "." + view + "." + std::to_string(class_index) + ".saliency." +
         (format == SaliencyFormat::kCsv ? "csv" : "pgm");
}

#define XVA_INSTANTIATE_EXPLAIN(T)                                                   \
  template TemporalGradcam temporal_gradcam(const ClassifierModel<T>&,               \
                                            const MultiViewSample<T>&, int);         \
  template SpatialSaliency spatial_gradcam(const AEModel<T>&, const ClassifierModel<T>&, \
                                           const MultiViewSample<T>&, std::size_t,   \
                                           const BasicTensor<T>&, std::size_t, int,  \
                                           std::size_t);

XVA_INSTANTIATE_EXPLAIN(float)
XVA_INSTANTIATE_EXPLAIN(double)

#undef XVA_INSTANTIATE_EXPLAIN

}  // namespace xva
