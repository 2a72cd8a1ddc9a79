#include "xva/autoencoder.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "xva/error.hpp"
#include "xva/ops.hpp"
#include "xva/preprocess.hpp"

namespace xva {
namespace {

struct EncoderRow {
  std::size_t out_channels;
  std::size_t stride;
};

constexpr EncoderRow kEncoderRows[kEncoderDepth] = {
    {32, 2}, {32, 1}, {64, 2}, {64, 2}, {128, 2}, {128, 2}, {128, 2}, {128, 2}};
constexpr std::size_t kDecoderChannels[kDecoderDepth] = {128, 128, 64, 64,
                                                         64,  32,  3};
constexpr std::size_t kBottleneckChannels = 128;
constexpr std::size_t kKernel = 3;
constexpr std::size_t kPad = 1;

// Output padding that makes a k=3, p=1, s=2 transposed conv map `in` to `out`.
std::size_t output_padding_for(std::size_t in, std::size_t out) {
  const std::size_t base = 2 * in - 1;
  if (out < base || out > base + 1) {
    throw ConfigError("decoder cannot map extent " + std::to_string(in) + " to " +
                      std::to_string(out));
  }
  return out - base;
}

}  // namespace

// --- AEModel -------------------------------------------------------------------

template <typename T>
AEModel<T>::AEModel(const AEConfig& config) : config_(config) {
  if (config.nz == 0 || config.height == 0 || config.width == 0) {
    throw ConfigError("AE config: nz and input size must be positive");
  }
  extents_.emplace_back(config.height, config.width);
  std::size_t in_ch = 3;
  for (const auto& row : kEncoderRows) {
    encoder.emplace_back(in_ch, row.out_channels, kKernel, kPad, row.stride);
    const auto [h, w] = extents_.back();
    extents_.emplace_back(ops::conv_output_extent(h, kKernel, kPad, row.stride),
                          ops::conv_output_extent(w, kKernel, kPad, row.stride));
    in_ch = row.out_channels;
  }
  bottleneck = Linear<T>(kBottleneckChannels, config.nz);
  const auto [seed_h, seed_w] = extents_.back();
  expand = Linear<T>(config.nz, kBottleneckChannels * seed_h * seed_w);

  // Transposed conv j retraces encoder stride-2 layer (8 - j); the stride-1
  // layer (index 2 in extents) is skipped, so the last layer lands on the
  // input extent.
  const std::size_t targets[kDecoderDepth] = {7, 6, 5, 4, 3, 2, 0};
  std::pair<std::size_t, std::size_t> cur = extents_.back();
  in_ch = kBottleneckChannels;
  for (std::size_t j = 0; j < kDecoderDepth; ++j) {
    const auto target = extents_[targets[j]];
    ops::ConvTranspose2dGeometry g;
    g.stride = 2;
    g.padding = kPad;
    g.output_padding_h = output_padding_for(cur.first, target.first);
    g.output_padding_w = output_padding_for(cur.second, target.second);
    decoder.emplace_back(in_ch, kDecoderChannels[j], kKernel, g);
    in_ch = kDecoderChannels[j];
    cur = target;
  }
}

template <typename T>
void AEModel<T>::init(Rng& rng) {
  for (auto& c : encoder) c.init(rng, kSeluGain);
  bottleneck.init(rng, kSeluGain);
  expand.init(rng, kSeluGain);
  for (auto& d : decoder) d.init(rng, kSeluGain);
}

template <typename T>
BasicTensor<T> AEModel<T>::encode(const BasicTensor<T>& frame) const {
  EncoderTape<T> tape;
  return encode(frame, tape);
}

template <typename T>
BasicTensor<T> AEModel<T>::encode(const BasicTensor<T>& frame,
                                  EncoderTape<T>& tape) const {
  require_shape(frame, {3, config_.height, config_.width}, "encode frame");
  tape = EncoderTape<T>{};
  tape.input = frame;
  const BasicTensor<T>* x = &tape.input;
  for (const auto& conv : encoder) {
    tape.pre.push_back(conv.forward(*x));
    tape.post.push_back(ops::selu(tape.pre.back()));
    x = &tape.post.back();
  }
  tape.pooled = ops::gap2d(*x);
  tape.code = bottleneck.forward(tape.pooled);
  tape.recorded = true;
  return tape.code;
}

template <typename T>
BasicTensor<T> AEModel<T>::decode(const BasicTensor<T>& code) const {
  DecoderTape<T> tape;
  return decode(code, tape);
}

template <typename T>
BasicTensor<T> AEModel<T>::decode(const BasicTensor<T>& code,
                                  DecoderTape<T>& tape) const {
  if (code.rank() != 1 || code.size() != config_.nz) {
    throw ShapeError("decode: expected code of length " +
                     std::to_string(config_.nz) + ", got " +
                     shape_string(code.shape()));
  }
  tape = DecoderTape<T>{};
  tape.code = code;
  tape.expand_pre = expand.forward(code);
  const auto [h, w] = extents_.back();
  tape.inputs.push_back(
      ops::selu(tape.expand_pre).reshaped({kBottleneckChannels, h, w}));
  for (std::size_t j = 0; j < decoder.size(); ++j) {
    tape.pre.push_back(decoder[j].forward(tape.inputs.back()));
    if (j + 1 < decoder.size()) tape.inputs.push_back(ops::selu(tape.pre.back()));
  }
  tape.output = tape.pre.back();
  tape.recorded = true;
  return tape.output;
}

template <typename T>
BasicTensor<T> AEModel<T>::backward_decoder(const DecoderTape<T>& tape,
                                            const BasicTensor<T>& grad_output) {
  if (!tape.recorded) throw UsageError("decoder backward called before forward");
  require_shape(grad_output, tape.output.shape(), "decoder grad_output");
  BasicTensor<T> g = grad_output;
  for (std::size_t j = decoder.size(); j-- > 0;) {
    if (j + 1 < decoder.size()) g = ops::selu_backward(tape.pre[j], g);
    g = decoder[j].backward(tape.inputs[j], g);
  }
  g = ops::selu_backward(tape.expand_pre, g.reshaped(tape.expand_pre.shape()));
  return expand.backward(tape.code, g);
}

template <typename T>
template <bool Accumulate>
BasicTensor<T> AEModel<T>::encoder_backward_impl(const EncoderTape<T>& tape,
                                                 const BasicTensor<T>& grad_code,
                                                 std::size_t stop_layer) {
  if (!tape.recorded) throw UsageError("encoder backward called before forward");
  if (grad_code.size() != config_.nz) {
    throw ShapeError("encoder backward: gradient length " +
                     std::to_string(grad_code.size()) + " != nz " +
                     std::to_string(config_.nz));
  }
  BasicTensor<T> g;
  if constexpr (Accumulate) {
    g = bottleneck.backward(tape.pooled, grad_code);
  } else {
    g = bottleneck.backward_input(tape.pooled, grad_code);
  }
  g = ops::gap2d_backward(tape.post.back().shape(), g);
  for (std::size_t i = encoder.size(); i-- > 0;) {
    if (i == stop_layer) return g;
    g = ops::selu_backward(tape.pre[i], g);
    const BasicTensor<T>& x = i == 0 ? tape.input : tape.post[i - 1];
    if constexpr (Accumulate) {
      g = encoder[i].backward(x, g);
    } else {
      g = encoder[i].backward_input(x, g);
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> AEModel<T>::backward_encoder(const EncoderTape<T>& tape,
                                            const BasicTensor<T>& grad_code) {
  return encoder_backward_impl<true>(tape, grad_code,
                                     std::numeric_limits<std::size_t>::max());
}

template <typename T>
BasicTensor<T> AEModel<T>::encoder_activation_gradient(
    const EncoderTape<T>& tape, const BasicTensor<T>& grad_code,
    std::size_t layer) const {
  if (layer >= encoder.size()) {
    throw UsageError("encoder layer index " + std::to_string(layer) +
                     " out of range");
  }
  // No parameter is written on the non-accumulating path.
  return const_cast<AEModel&>(*this).template encoder_backward_impl<false>(
      tape, grad_code, layer);
}

template <typename T>
std::vector<Parameter<T>*> AEModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  auto add = [&out](auto& layer) {
    for (auto* p : layer.parameters()) out.push_back(p);
  };
  for (auto& c : encoder) add(c);
  add(bottleneck);
  add(expand);
  for (auto& d : decoder) add(d);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> AEModel<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (auto* p : const_cast<AEModel&>(*this).parameters()) out.push_back(p);
  return out;
}

template <typename T>
void AEModel<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

// --- PerceptualExtractor -------------------------------------------------------

template <typename T>
PerceptualExtractor<T>::PerceptualExtractor() {
  layers.emplace_back(3, 16, kKernel, kPad, 2);
  layers.emplace_back(16, 32, kKernel, kPad, 2);
  layers.emplace_back(32, 32, kKernel, kPad, 2);
}

template <typename T>
PerceptualExtractor<T> PerceptualExtractor<T>::random(std::uint64_t seed) {
  PerceptualExtractor phi;
  Rng rng(seed);
  for (auto& l : phi.layers) l.init(rng, kReluGain);
  phi.provenance = Provenance::kRandomSeeded;
  phi.seed = seed;
  return phi;
}

template <typename T>
BasicTensor<T> PerceptualExtractor<T>::features(const BasicTensor<T>& image) const {
  PerceptualTape<T> tape;
  return features(image, tape);
}

template <typename T>
BasicTensor<T> PerceptualExtractor<T>::features(const BasicTensor<T>& image,
                                                PerceptualTape<T>& tape) const {
  tape = PerceptualTape<T>{};
  tape.input = image;
  const BasicTensor<T>* x = &tape.input;
  for (const auto& l : layers) {
    tape.pre.push_back(l.forward(*x));
    tape.post.push_back(ops::relu(tape.pre.back()));
    x = &tape.post.back();
  }
  tape.recorded = true;
  return layers.empty() ? tape.input : tape.post.back();
}

template <typename T>
BasicTensor<T> PerceptualExtractor<T>::backward_input(
    const PerceptualTape<T>& tape, const BasicTensor<T>& grad_features) const {
  if (!tape.recorded) throw UsageError("perceptual backward called before forward");
  BasicTensor<T> g = grad_features;
  for (std::size_t i = layers.size(); i-- > 0;) {
    g = ops::relu_backward(tape.pre[i], g);
    g = layers[i].backward_input(i == 0 ? tape.input : tape.post[i - 1], g);
  }
  return g;
}

// --- Losses --------------------------------------------------------------------

template <typename T>
T loss_dae(std::span<const BasicTensor<T>> targets,
           std::span<const BasicTensor<T>> reconstructions) {
  if (targets.empty()) throw UsageError("loss_dae: empty batch");
  if (targets.size() != reconstructions.size()) {
    throw UsageError("loss_dae: batch sizes differ");
  }
  T total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    require_shape(reconstructions[i], targets[i].shape(), "loss_dae");
    T s = 0;
    for (std::size_t j = 0; j < targets[i].size(); ++j) {
      const T d = targets[i][j] - reconstructions[i][j];
      s += d * d;
    }
    total += s;
  }
  return total / static_cast<T>(targets.size());
}

template <typename T>
T loss_perc(const PerceptualExtractor<T>& phi, const BasicTensor<T>& target,
            const BasicTensor<T>& reconstruction) {
  require_shape(reconstruction, target.shape(), "loss_perc");
  const auto a = phi.features(target);
  const auto b = phi.features(reconstruction);
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<T>(a.size());
}

template <typename T>
T loss_perc_with_grad(const PerceptualExtractor<T>& phi,
                      const BasicTensor<T>& target,
                      const BasicTensor<T>& reconstruction,
                      BasicTensor<T>& grad_reconstruction) {
  require_shape(reconstruction, target.shape(), "loss_perc");
  const auto a = phi.features(target);
  PerceptualTape<T> tape;
  const auto b = phi.features(reconstruction, tape);
  const T n = static_cast<T>(a.size());
  T s = 0;
  BasicTensor<T> gb(b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = b[i] - a[i];
    s += d * d;
    gb[i] = T(2) * d / n;
  }
  grad_reconstruction = phi.backward_input(tape, gb);
  return s / n;
}

template <typename T>
T loss_final_ae(const PerceptualExtractor<T>& phi,
                std::span<const BasicTensor<T>> targets,
                std::span<const BasicTensor<T>> reconstructions) {
  const T dae = loss_dae(targets, reconstructions);
  T perc = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    perc += loss_perc(phi, targets[i], reconstructions[i]);
  }
  return dae + perc / static_cast<T>(targets.size());
}

template <typename T>
T ae_sample_loss(const PerceptualExtractor<T>* phi, const BasicTensor<T>& target,
                 const BasicTensor<T>& reconstruction, BasicTensor<T>& grad) {
  require_shape(reconstruction, target.shape(), "ae_sample_loss");
  T loss = 0;
  grad = BasicTensor<T>(reconstruction.shape());
  for (std::size_t j = 0; j < reconstruction.size(); ++j) {
    const T d = reconstruction[j] - target[j];
    loss += d * d;
    grad[j] = T(2) * d;
  }
  if (phi != nullptr) {
    BasicTensor<T> grad_perc;
    loss += loss_perc_with_grad(*phi, target, reconstruction, grad_perc);
    ops::add_inplace(grad, grad_perc);
  }
  return loss;
}

template <typename T>
T loss_final_ae_with_grad(const PerceptualExtractor<T>* phi,
                          std::span<const BasicTensor<T>> targets,
                          std::span<const BasicTensor<T>> reconstructions,
                          std::vector<BasicTensor<T>>& grads) {
  if (targets.empty()) throw UsageError("loss_final_ae: empty batch");
  if (targets.size() != reconstructions.size()) {
    throw UsageError("loss_final_ae: batch sizes differ");
  }
  const T inv_n = T(1) / static_cast<T>(targets.size());
  grads.assign(targets.size(), {});
  T total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    total += ae_sample_loss(phi, targets[i], reconstructions[i], grads[i]);
    for (auto& g : grads[i].data()) g *= inv_n;
  }
  return total * inv_n;
}

// --- LrSchedule ----------------------------------------------------------------

LrSchedule::LrSchedule(const LrScheduleConfig& config)
    : config_(config),
      lr_(config.initial),
      best_(std::numeric_limits<double>::infinity()) {}

bool LrSchedule::end_epoch(double mean_loss) {
  ++epoch_;
  if (mean_loss < best_) {
    best_ = mean_loss;
    stale_ = 0;
  } else {
    ++stale_;
  }
  const bool periodic = config_.step_epochs > 0 && epoch_ % config_.step_epochs == 0;
  const bool plateau = config_.patience > 0 && stale_ >= config_.patience;
  if (!periodic && !plateau) return false;
  lr_ = std::max(lr_ * config_.factor, config_.min_lr);
  stale_ = 0;
  return true;
}

// --- Training ------------------------------------------------------------------

template <typename T>
AETrainResult train_ae(AEModel<T>& model, const PerceptualExtractor<T>& phi,
                       std::span<const BasicTensor<T>> frames,
                       const NoiseSpec& noise, const AETrainOptions& options) {
  if (frames.empty()) throw UsageError("train_ae: empty dataset");
  if (options.batch_size == 0) throw UsageError("train_ae: batch size must be positive");

  AETrainResult result;
  LrSchedule schedule(options.schedule);
  Rng order_rng(options.seed);
  Rng noise_rng(noise.seed);
  std::vector<std::size_t> order(frames.size());
  auto params = model.parameters();
  model.zero_grad();

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(std::span<std::size_t>(order));
    const double lr = schedule.current();
    double epoch_total = 0.0;

    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      const T inv_n = T(1) / static_cast<T>(stop - start);
      for (std::size_t b = start; b < stop; ++b) {
        const BasicTensor<T>& clean = frames[order[b]];
        const BasicTensor<T> noisy =
            noise.sigma > 0.0 ? add_noise(clean, noise.sigma, noise_rng) : clean;

        EncoderTape<T> enc;
        DecoderTape<T> dec;
        const auto recon = model.decode(model.encode(noisy, enc), dec);

        BasicTensor<T> grad;
        const T sample_loss =
            ae_sample_loss(options.use_perceptual ? &phi : nullptr, clean, recon, grad);
        for (auto& g : grad.data()) g *= inv_n;
        epoch_total += static_cast<double>(sample_loss);

        const auto grad_code = model.backward_decoder(dec, grad);
        model.backward_encoder(enc, grad_code);
      }
      adam_step_all(std::span<Parameter<T>* const>(params), lr, options.adam);
    }

    const double mean = epoch_total / static_cast<double>(frames.size());
    result.epoch_loss.push_back(mean);
    result.epoch_lr.push_back(lr);
    if (options.on_epoch) options.on_epoch(epoch + 1, mean, lr);
    schedule.end_epoch(mean);
  }
  return result;
}

template <typename T>
BasicTensor<T> extract_features(const AEModel<T>& model,
                                std::span<const BasicTensor<T>> frames) {
  if (frames.empty()) throw UsageError("extract_features: zero-length video");
  const std::size_t nz = model.config().nz;
  BasicTensor<T> out({frames.size(), nz});
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto code = model.encode(frames[t]);
    std::copy_n(code.ptr(), nz, out.ptr() + t * nz);
  }
  return out;
}

#define XVA_INSTANTIATE_AE(T)                                                    \
  template class AEModel<T>;                                                     \
  template class PerceptualExtractor<T>;                                         \
  template T loss_dae(std::span<const BasicTensor<T>>,                           \
                      std::span<const BasicTensor<T>>);                          \
  template T loss_perc(const PerceptualExtractor<T>&, const BasicTensor<T>&,     \
                       const BasicTensor<T>&);                                   \
  template T loss_perc_with_grad(const PerceptualExtractor<T>&,                  \
                                 const BasicTensor<T>&, const BasicTensor<T>&,   \
                                 BasicTensor<T>&);                               \
  template T loss_final_ae(const PerceptualExtractor<T>&,                        \
                           std::span<const BasicTensor<T>>,                      \
                           std::span<const BasicTensor<T>>);                     \
  template T ae_sample_loss(const PerceptualExtractor<T>*, const BasicTensor<T>&,      \
                            const BasicTensor<T>&, BasicTensor<T>&);                \
  template T loss_final_ae_with_grad(const PerceptualExtractor<T>*,                   \
                                     std::span<const BasicTensor<T>>,                 \
                                     std::span<const BasicTensor<T>>,                 \
                                     std::vector<BasicTensor<T>>&);                   \
  template AETrainResult train_ae(AEModel<T>&, const PerceptualExtractor<T>&,    \
                                  std::span<const BasicTensor<T>>,               \
                                  const NoiseSpec&, const AETrainOptions&);      \
  template BasicTensor<T> extract_features(const AEModel<T>&,                    \
                                           std::span<const BasicTensor<T>>);

XVA_INSTANTIATE_AE(float)
XVA_INSTANTIATE_AE(double)

#undef XVA_INSTANTIATE_AE

}  // namespace xva
