#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xva/adam.hpp"
#include "xva/layers.hpp"
#include "xva/tensor.hpp"

namespace xva {

enum class ViewId : std::uint8_t { kLeft = 0, kRight = 1, kFront = 2, kHead = 3 };

std::string_view view_name(ViewId view);
/// Accepts "left", "right", "front", "head"; throws ConfigError otherwise.
ViewId parse_view(std::string_view name);

/// Which binary label a sample carries. Class 1 is the positive class:
/// novice for expert-vs-novice, failure for success-vs-failure.
enum class LabelTask : std::uint8_t { kExpertNovice = 0, kSuccessFailure = 1 };

template <typename T>
struct ViewFeatureSequence {
  ViewId view = ViewId::kLeft;
  BasicTensor<T> features;  // T x n_z
};

template <typename T>
struct MultiViewSample {
  std::string trial_id;
  std::string subject_id;
  std::vector<ViewFeatureSequence<T>> views;
  int label = 0;  // 0 or 1
};

/// Keep only the listed views, in the listed order.
template <typename T>
MultiViewSample<T> select_views(const MultiViewSample<T>& sample,
                                std::span<const ViewId> views);

// --- Squeeze-and-excitation ------------------------------------------------------

template <typename T>
struct SETape {
  BasicTensor<T> input;   // T x C
  BasicTensor<T> squeeze; // C
  BasicTensor<T> hidden;  // C/r, before ReLU
  BasicTensor<T> gate;    // C, sigmoid output
};

/// z = mean_t u;  s = sigmoid(W2 relu(W1 z));  out_t = u_t * s.
template <typename T>
class SEBlock {
 public:
  SEBlock() = default;
  SEBlock(std::size_t channels, std::size_t reduction);

  BasicTensor<T> forward(const BasicTensor<T>& u) const;
  BasicTensor<T> forward(const BasicTensor<T>& u, SETape<T>& tape) const;
  BasicTensor<T> backward(const SETape<T>& tape, const BasicTensor<T>& gy);
  BasicTensor<T> backward_input(const SETape<T>& tape,
                                const BasicTensor<T>& gy) const;

  void init(Rng& rng);
  std::vector<Parameter<T>*> parameters() { return {&w1, &w2}; }
  std::size_t channels() const { return w1.value.dim(1); }
  std::size_t reduction() const { return w1.value.dim(1) / w1.value.dim(0); }

  Parameter<T> w1;  // C/r x C
  Parameter<T> w2;  // C x C/r

 private:
  template <bool Accumulate>
  BasicTensor<T> backward_impl(const SETape<T>& tape, const BasicTensor<T>& gy);
};

// --- Cross-view attention ------------------------------------------------------

template <typename T>
struct XvaTape {
  BasicTensor<T> v1, v2;
  BasicTensor<T> m1, m2;  // T x T row-softmax masks
  BasicTensor<T> a1, a2;  // attended features
};

/// Cross-view attention of two time-aligned feature sequences (T x C each):
///   m1 = softmax_rows(v1 v2^T),  o1 = (m1 v2) * v1   (element-wise)
///   m2 = softmax_rows(v2 v1^T),  o2 = (m2 v1) * v2
///   y  = [o1 | o2]                                    (T x 2C)
template <typename T>
BasicTensor<T> xva_fuse(const BasicTensor<T>& v1, const BasicTensor<T>& v2);
template <typename T>
BasicTensor<T> xva_fuse(const BasicTensor<T>& v1, const BasicTensor<T>& v2,
                        XvaTape<T>& tape);
/// Returns {d v1, d v2}.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> xva_fuse_backward(
    const XvaTape<T>& tape, const BasicTensor<T>& grad_output);

// --- Classifier ------------------------------------------------------------------

struct ClassifierConfig {
  std::size_t nz = 32;
  std::size_t views = 2;
  bool use_xva = true;
  bool use_se = true;
  std::size_t se_reduction = 4;
  std::size_t stem_channels = 64;
  std::size_t head_channels = 128;
  std::size_t kernel = 3;
  std::uint64_t seed = 0;

  /// Channel width entering the post-fusion block.
  std::size_t fusion_width() const;
};

template <typename T>
struct BlockTape {
  BasicTensor<T> input;
  BasicTensor<T> pre;  // conv output
  BasicTensor<T> act;  // after ReLU
  SETape<T> se;
  BasicTensor<T> output;
};

/// conv1d(k, pad k/2) -> ReLU -> SE (identity gate when SE is disabled).
template <typename T>
struct ConvBlock {
  Conv1d<T> conv;
  SEBlock<T> se;

  BasicTensor<T> forward(const BasicTensor<T>& x, bool use_se, BlockTape<T>& tape) const;
};

template <typename T>
struct ClassifierTape {
  std::vector<std::vector<BlockTape<T>>> stems;  // [view][block]
  std::vector<XvaTape<T>> pairs;
  std::vector<std::size_t> fusion_widths;
  BlockTape<T> post;
  BasicTensor<T> pooled;
  BasicTensor<T> logits;
  BasicTensor<T> probabilities;
  bool recorded = false;
};

template <typename T>
struct ClassifierGradients {
  std::vector<BasicTensor<T>> inputs;  // d logit-signal / d features, per view
  BasicTensor<T> last_conv;            // d signal / d post-block ReLU output
};

template <typename T>
struct ClassifierOutput {
  BasicTensor<T> logits;
  BasicTensor<T> probabilities;
  int predicted = 0;
};

/// Per-view stems [conv(n_z->64)+ReLU+SE, conv(64->64)+ReLU+SE], fusion
/// (pairwise xVA over all unordered view pairs, channel concatenation when
/// xVA is off, pass-through for one view), post block conv(->128)+ReLU+SE,
/// temporal GAP, linear(128->2), softmax.
template <typename T>
class ClassifierModel {
 public:
  explicit ClassifierModel(const ClassifierConfig& config = {});

  const ClassifierConfig& config() const { return config_; }

  /// Seeded from config().seed.
  void init();
  void init(Rng& rng);

  ClassifierOutput<T> classify(const MultiViewSample<T>& sample) const;
  ClassifierOutput<T> forward(const MultiViewSample<T>& sample,
                              ClassifierTape<T>& tape) const;

  /// Accumulates parameter gradients for upstream d/d logits.
  ClassifierGradients<T> backward(const ClassifierTape<T>& tape,
                                  const BasicTensor<T>& grad_logits);
  /// Same gradients w.r.t. inputs and the last conv activation, no
  /// parameter accumulation.
  ClassifierGradients<T> input_gradients(const ClassifierTape<T>& tape,
                                         const BasicTensor<T>& grad_logits) const;

  std::vector<Parameter<T>*> parameters();
  void zero_grad();

  std::vector<std::vector<ConvBlock<T>>> stems;  // [view][block]
  ConvBlock<T> post;
  Linear<T> head;

 private:
  template <bool Accumulate>
  ClassifierGradients<T> backward_impl(const ClassifierTape<T>& tape,
                                       const BasicTensor<T>& grad_logits);
  void validate(const MultiViewSample<T>& sample) const;

  ClassifierConfig config_;
};

/// -(1/m) sum_i y_i log(p_i) with m = 2 classes and one-hot y; p clamped at
/// 1e-12.
template <typename T>
T loss_xent(const BasicTensor<T>& probabilities, int label);
/// Gradient of loss_xent(softmax(logits)) w.r.t. the logits: (p - y) / m.
template <typename T>
BasicTensor<T> loss_xent_grad_logits(const BasicTensor<T>& probabilities,
                                     int label);

struct ClassifierTrainOptions {
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  AdamConfig adam;
  std::uint64_t seed = 0;  // per-epoch shuffle
  bool shuffle = true;
  /// Inverse-frequency class weights on the loss. Off by default.
  bool balance_classes = false;
  std::function<void(std::size_t epoch, double loss, double accuracy)> on_epoch;
};

struct ClassifierTrainResult {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;  // running training accuracy
};

/// Unit-batch Adam training: one optimizer step per sample.
template <typename T>
ClassifierTrainResult train_classifier(ClassifierModel<T>& model,
                                       std::span<const MultiViewSample<T>> samples,
                                       const ClassifierTrainOptions& options);

enum class Ablation { kXva, kSe };

/// Copy of `model` with the named mechanism switched off. Layers whose
/// shape changes (the post-fusion conv when the fusion width changes) are
/// re-initialized from the model seed; everything else is kept.
template <typename T>
ClassifierModel<T> ablate(const ClassifierModel<T>& model, Ablation which);

}  // namespace xva
