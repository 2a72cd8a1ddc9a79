#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xva/adam.hpp"
#include "xva/layers.hpp"
#include "xva/rng.hpp"
#include "xva/tensor.hpp"

namespace xva {

struct AEConfig {
  std::size_t nz = 32;
  std::size_t height = 256;
  std::size_t width = 256;
};

inline constexpr std::size_t kEncoderDepth = 8;
inline constexpr std::size_t kDecoderDepth = 7;

/// Activations recorded by an encoder forward pass; needed for backward.
template <typename T>
struct EncoderTape {
  BasicTensor<T> input;
  std::vector<BasicTensor<T>> pre;   // conv outputs before SELU
  std::vector<BasicTensor<T>> post;  // after SELU
  BasicTensor<T> pooled;
  BasicTensor<T> code;
  bool recorded = false;
};

template <typename T>
struct DecoderTape {
  BasicTensor<T> code;
  BasicTensor<T> expand_pre;
  std::vector<BasicTensor<T>> inputs;  // input of each transposed conv
  std::vector<BasicTensor<T>> pre;     // transposed conv outputs
  BasicTensor<T> output;
  bool recorded = false;
};

/// Denoising convolutional autoencoder.
///
/// Encoder: eight 3x3 convs (pad 1; strides 2,1,2,2,2,2,2,2; channels
/// 32,32,64,64,128,128,128,128), each followed by SELU, then global average
/// pooling to 128 and a bottleneck linear 128 -> nz.
/// Decoder: linear nz -> 128*h*w + SELU (h x w = encoder output extent),
/// then seven 3x3 stride-2 transposed convs (channels 128,128,64,64,64,32,3)
/// with SELU after all but the last. Output padding is chosen per layer so
/// the decoder retraces the encoder's spatial extents back to (H, W).
template <typename T>
class AEModel {
 public:
  explicit AEModel(const AEConfig& config = {});

  const AEConfig& config() const { return config_; }

  /// Spatial extent after each encoder conv; entry 0 is the input extent.
  const std::vector<std::pair<std::size_t, std::size_t>>& encoder_extents() const {
    return extents_;
  }

  void init(Rng& rng);

  BasicTensor<T> encode(const BasicTensor<T>& frame) const;
  BasicTensor<T> encode(const BasicTensor<T>& frame, EncoderTape<T>& tape) const;
  BasicTensor<T> decode(const BasicTensor<T>& code) const;
  BasicTensor<T> decode(const BasicTensor<T>& code, DecoderTape<T>& tape) const;

  /// Accumulates parameter gradients; returns d loss / d code.
  BasicTensor<T> backward_decoder(const DecoderTape<T>& tape,
                                  const BasicTensor<T>& grad_output);
  /// Accumulates parameter gradients; returns d loss / d frame.
  BasicTensor<T> backward_encoder(const EncoderTape<T>& tape,
                                  const BasicTensor<T>& grad_code);

  /// Gradient of a code-space signal w.r.t. the SELU output of encoder conv
  /// `layer` (0-based). No parameter gradients are touched.
  BasicTensor<T> encoder_activation_gradient(const EncoderTape<T>& tape,
                                             const BasicTensor<T>& grad_code,
                                             std::size_t layer) const;

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  void zero_grad();

  std::vector<Conv2d<T>> encoder;
  Linear<T> bottleneck;
  Linear<T> expand;
  std::vector<ConvTranspose2d<T>> decoder;

 private:
  template <bool Accumulate>
  BasicTensor<T> encoder_backward_impl(const EncoderTape<T>& tape,
                                       const BasicTensor<T>& grad_code,
                                       std::size_t stop_layer);

  AEConfig config_;
  std::vector<std::pair<std::size_t, std::size_t>> extents_;
};

enum class Provenance : std::uint8_t { kRandomSeeded = 0, kLoadedFromFile = 1 };

template <typename T>
struct PerceptualTape {
  BasicTensor<T> input;
  std::vector<BasicTensor<T>> pre;
  std::vector<BasicTensor<T>> post;
  bool recorded = false;
};

/// Frozen feature map used by the perceptual loss: three 3x3 stride-2
/// convs (3 -> 16 -> 32 -> 32) with ReLU. It exposes no mutable access to
/// its weights through the training API; gradients only flow to its input.
/// With `layers` cleared it is the identity map.
template <typename T>
class PerceptualExtractor {
 public:
  PerceptualExtractor();
  /// Random frozen weights drawn from `seed`.
  static PerceptualExtractor random(std::uint64_t seed);

  BasicTensor<T> features(const BasicTensor<T>& image) const;
  BasicTensor<T> features(const BasicTensor<T>& image, PerceptualTape<T>& tape) const;
  BasicTensor<T> backward_input(const PerceptualTape<T>& tape,
                                const BasicTensor<T>& grad_features) const;

  Provenance provenance = Provenance::kRandomSeeded;
  std::uint64_t seed = 0;
  std::vector<Conv2d<T>> layers;
};

struct NoiseSpec {
  double sigma = 0.1;
  std::uint64_t seed = 0;
};

// --- Losses --------------------------------------------------------------------

/// (1/N) sum_i ||q_i - r_i||^2.
template <typename T>
T loss_dae(std::span<const BasicTensor<T>> targets,
           std::span<const BasicTensor<T>> reconstructions);

/// ||phi(q) - phi(r)||^2 / (C_i H_i W_i) for one image pair.
template <typename T>
T loss_perc(const PerceptualExtractor<T>& phi, const BasicTensor<T>& target,
            const BasicTensor<T>& reconstruction);

/// loss_perc plus its gradient w.r.t. the reconstruction.
template <typename T>
T loss_perc_with_grad(const PerceptualExtractor<T>& phi,
                      const BasicTensor<T>& target,
                      const BasicTensor<T>& reconstruction,
                      BasicTensor<T>& grad_reconstruction);

/// L_DAE + batch mean of L_perc, unit weights.
template <typename T>
T loss_final_ae(const PerceptualExtractor<T>& phi,
                std::span<const BasicTensor<T>> targets,
                std::span<const BasicTensor<T>> reconstructions);

/// One sample's share of L_final_AE before batch averaging:
/// ||q - r||^2 + loss_perc(q, r), or just the squared error when `phi` is
/// null. `grad` receives the derivative w.r.t. the reconstruction.
template <typename T>
T ae_sample_loss(const PerceptualExtractor<T>* phi, const BasicTensor<T>& target,
                 const BasicTensor<T>& reconstruction, BasicTensor<T>& grad);

/// Batch mean of ae_sample_loss (L_DAE when `phi` is null, L_final_AE
/// otherwise) with per-reconstruction gradients.
template <typename T>
T loss_final_ae_with_grad(const PerceptualExtractor<T>* phi,
                          std::span<const BasicTensor<T>> targets,
                          std::span<const BasicTensor<T>> reconstructions,
                          std::vector<BasicTensor<T>>& grads);

// --- Training ------------------------------------------------------------------

struct LrScheduleConfig {
  double initial = 1e-3;
  double factor = 0.2;
  std::size_t step_epochs = 20;
  std::size_t patience = 5;
  double min_lr = 5e-5;
};

/// Step decay every `step_epochs` epochs, or earlier once the epoch-mean
/// loss has not improved on its best value for `patience` consecutive
/// epochs; never below `min_lr`. Either trigger resets the patience count.
class LrSchedule {
 public:
  explicit LrSchedule(const LrScheduleConfig& config = {});

  double current() const { return lr_; }
  /// Report the mean loss of the epoch that just finished (1-based count
  /// advances by one per call). Returns true if the rate was decayed.
  bool end_epoch(double mean_loss);

 private:
  LrScheduleConfig config_;
  double lr_;
  double best_;
  std::size_t epoch_ = 0;
  std::size_t stale_ = 0;
};

struct AETrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  LrScheduleConfig schedule;
  AdamConfig adam;
  std::uint64_t seed = 0;  // shuffling order
  bool use_perceptual = true;
  std::function<void(std::size_t epoch, double loss, double lr)> on_epoch;
};

struct AETrainResult {
  std::vector<double> epoch_loss;  // mean L_final_AE per epoch
  std::vector<double> epoch_lr;    // learning rate used during the epoch
};

template <typename T>
AETrainResult train_ae(AEModel<T>& model, const PerceptualExtractor<T>& phi,
                       std::span<const BasicTensor<T>> frames,
                       const NoiseSpec& noise, const AETrainOptions& options);

/// Row t is encode(frames[t]).
template <typename T>
BasicTensor<T> extract_features(const AEModel<T>& model,
                                std::span<const BasicTensor<T>> frames);

}  // namespace xva
