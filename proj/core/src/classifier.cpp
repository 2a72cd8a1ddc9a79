#include "xva/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xva/error.hpp"
#include "xva/ops.hpp"

namespace xva {

std::string_view view_name(ViewId view) {
  switch (view) {
    case ViewId::kLeft: return "left";
    case ViewId::kRight: return "right";
    case ViewId::kFront: return "front";
    case ViewId::kHead: return "head";
  }
  return "unknown";
}

ViewId parse_view(std::string_view name) {
  if (name == "left") return ViewId::kLeft;
  if (name == "right") return ViewId::kRight;
  if (name == "front") return ViewId::kFront;
  if (name == "head") return ViewId::kHead;
  throw ConfigError("unknown view '" + std::string(name) +
                    "' (expected left, right, front or head)");
}

template <typename T>
MultiViewSample<T> select_views(const MultiViewSample<T>& sample,
                                std::span<const ViewId> views) {
  MultiViewSample<T> out;
  out.trial_id = sample.trial_id;
  out.subject_id = sample.subject_id;
  out.label = sample.label;
  for (ViewId v : views) {
    auto it = std::find_if(sample.views.begin(), sample.views.end(),
                           [v](const auto& s) { return s.view == v; });
    if (it == sample.views.end()) {
      throw UsageError("trial " + sample.trial_id + " has no " +
                       std::string(view_name(v)) + " view");
    }
    out.views.push_back(*it);
  }
  return out;
}

// --- SEBlock -----------------------------------------------------------------------

template <typename T>
SEBlock<T>::SEBlock(std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels % reduction != 0 || channels / reduction == 0) {
    throw ConfigError("SE block: " + std::to_string(channels) +
                      " channels not divisible by reduction " +
                      std::to_string(reduction));
  }
  w1 = Parameter<T>({channels / reduction, channels});
  w2 = Parameter<T>({channels, channels / reduction});
}

template <typename T>
void SEBlock<T>::init(Rng& rng) {
  init_fan_in(w1, static_cast<double>(w1.value.dim(1)), kReluGain, rng);
  init_fan_in(w2, static_cast<double>(w2.value.dim(1)), 1.0, rng);
}

template <typename T>
BasicTensor<T> SEBlock<T>::forward(const BasicTensor<T>& u) const {
  SETape<T> tape;
  return forward(u, tape);
}

template <typename T>
BasicTensor<T> SEBlock<T>::forward(const BasicTensor<T>& u, SETape<T>& tape) const {
  require_rank(u, 2, "SE input");
  const std::size_t C = channels();
  const std::size_t H = w1.value.dim(0);
  if (u.dim(1) != C) {
    throw ShapeError("SE block expects " + std::to_string(C) + " channels, got " +
                     shape_string(u.shape()));
  }
  tape.input = u;
  tape.squeeze = ops::gap1d(u);
  tape.hidden = BasicTensor<T>({H});
  for (std::size_t j = 0; j < H; ++j) {
    T s = 0;
    for (std::size_t c = 0; c < C; ++c) s += w1.value[j * C + c] * tape.squeeze[c];
    tape.hidden[j] = s;
  }
  BasicTensor<T> excite({C});
  for (std::size_t c = 0; c < C; ++c) {
    T s = 0;
    for (std::size_t j = 0; j < H; ++j) {
      s += w2.value[c * H + j] * std::max(tape.hidden[j], T(0));
    }
    excite[c] = s;
  }
  tape.gate = ops::sigmoid(excite);
  BasicTensor<T> out = u;
  for (std::size_t t = 0; t < u.dim(0); ++t) {
    for (std::size_t c = 0; c < C; ++c) out[t * C + c] *= tape.gate[c];
  }
  return out;
}

template <typename T>
template <bool Accumulate>
BasicTensor<T> SEBlock<T>::backward_impl(const SETape<T>& tape,
                                         const BasicTensor<T>& gy) {
  require_shape(gy, tape.input.shape(), "SE grad_output");
  const std::size_t len = tape.input.dim(0);
  const std::size_t C = channels();
  const std::size_t H = w1.value.dim(0);

  BasicTensor<T> d_excite({C});
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      d_excite[c] += gy[t * C + c] * tape.input[t * C + c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    d_excite[c] *= tape.gate[c] * (T(1) - tape.gate[c]);
  }
  BasicTensor<T> d_hidden({H});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t j = 0; j < H; ++j) {
      const T r = std::max(tape.hidden[j], T(0));
      if constexpr (Accumulate) w2.grad[c * H + j] += d_excite[c] * r;
      d_hidden[j] += w2.value[c * H + j] * d_excite[c];
    }
  }
  for (std::size_t j = 0; j < H; ++j) {
    if (!(tape.hidden[j] > T(0))) d_hidden[j] = T(0);
  }
  BasicTensor<T> d_squeeze({C});
  for (std::size_t j = 0; j < H; ++j) {
    for (std::size_t c = 0; c < C; ++c) {
      if constexpr (Accumulate) w1.grad[j * C + c] += d_hidden[j] * tape.squeeze[c];
      d_squeeze[c] += w1.value[j * C + c] * d_hidden[j];
    }
  }
  BasicTensor<T> gu(tape.input.shape());
  const T inv_len = T(1) / static_cast<T>(len);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      gu[t * C + c] = gy[t * C + c] * tape.gate[c] + d_squeeze[c] * inv_len;
    }
  }
  return gu;
}

template <typename T>
BasicTensor<T> SEBlock<T>::backward(const SETape<T>& tape, const BasicTensor<T>& gy) {
  return backward_impl<true>(tape, gy);
}

template <typename T>
BasicTensor<T> SEBlock<T>::backward_input(const SETape<T>& tape,
                                          const BasicTensor<T>& gy) const {
  return const_cast<SEBlock&>(*this).template backward_impl<false>(tape, gy);
}

// --- xVA -------------------------------------------------------------------------

template <typename T>
BasicTensor<T> xva_fuse(const BasicTensor<T>& v1, const BasicTensor<T>& v2) {
  XvaTape<T> tape;
  return xva_fuse(v1, v2, tape);
}

template <typename T>
BasicTensor<T> xva_fuse(const BasicTensor<T>& v1, const BasicTensor<T>& v2,
                        XvaTape<T>& tape) {
  require_rank(v1, 2, "xva_fuse v1");
  require_shape(v2, v1.shape(), "xva_fuse v2");
  tape.v1 = v1;
  tape.v2 = v2;
  tape.m1 = ops::softmax(ops::matmul_nt(v1, v2), 1);
  tape.m2 = ops::softmax(ops::matmul_nt(v2, v1), 1);
  tape.a1 = ops::matmul(tape.m1, v2);
  tape.a2 = ops::matmul(tape.m2, v1);
  return ops::concat_columns<T>({ops::hadamard(tape.a1, v1), ops::hadamard(tape.a2, v2)});
}

namespace {

// Gradient of o = (softmax_rows(x y^T) y) * x w.r.t. x and y, accumulated.
template <typename T>
void xva_half_backward(const BasicTensor<T>& x, const BasicTensor<T>& y,
                       const BasicTensor<T>& mask, const BasicTensor<T>& attended,
                       const BasicTensor<T>& g, BasicTensor<T>& gx,
                       BasicTensor<T>& gy) {
  const auto d_attended = ops::hadamard(g, x);
  ops::add_inplace(gx, ops::hadamard(g, attended));
  const auto d_mask = ops::matmul_nt(d_attended, y);
  ops::add_inplace(gy, ops::matmul_tn(mask, d_attended));
  const auto d_scores = ops::softmax_backward(mask, d_mask, 1);
  ops::add_inplace(gx, ops::matmul(d_scores, y));
  ops::add_inplace(gy, ops::matmul_tn(d_scores, x));
}

}  // namespace

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> xva_fuse_backward(
    const XvaTape<T>& tape, const BasicTensor<T>& grad_output) {
  const std::size_t C = tape.v1.dim(1);
  require_shape(grad_output, {tape.v1.dim(0), 2 * C}, "xva_fuse grad_output");
  const auto halves = ops::split_columns(grad_output, {C, C});
  BasicTensor<T> g1(tape.v1.shape());
  BasicTensor<T> g2(tape.v2.shape());
  xva_half_backward(tape.v1, tape.v2, tape.m1, tape.a1, halves[0], g1, g2);
  xva_half_backward(tape.v2, tape.v1, tape.m2, tape.a2, halves[1], g2, g1);
  return {std::move(g1), std::move(g2)};
}

// --- ConvBlock -------------------------------------------------------------------

template <typename T>
BasicTensor<T> ConvBlock<T>::forward(const BasicTensor<T>& x, bool use_se,
                                     BlockTape<T>& tape) const {
  tape.input = x;
  tape.pre = conv.forward(x);
  tape.act = ops::relu(tape.pre);
  tape.output = use_se ? se.forward(tape.act, tape.se) : tape.act;
  return tape.output;
}

namespace {

template <bool Accumulate, typename T>
BasicTensor<T> block_backward(ConvBlock<T>& block, const BlockTape<T>& tape,
                              const BasicTensor<T>& gy, bool use_se,
                              BasicTensor<T>* grad_act) {
  BasicTensor<T> g;
  if (use_se) {
    if constexpr (Accumulate) {
      g = block.se.backward(tape.se, gy);
    } else {
      g = block.se.backward_input(tape.se, gy);
    }
  } else {
    g = gy;
  }
  if (grad_act) *grad_act = g;
  g = ops::relu_backward(tape.pre, g);
  if constexpr (Accumulate) {
    return block.conv.backward(tape.input, g);
  } else {
    return block.conv.backward_input(tape.input, g);
  }
}

}  // namespace

// --- ClassifierModel ---------------------------------------------------------------

std::size_t ClassifierConfig::fusion_width() const {
  if (views <= 1) return stem_channels;
  if (use_xva) return views * (views - 1) / 2 * 2 * stem_channels;
  return views * stem_channels;
}

template <typename T>
ClassifierModel<T>::ClassifierModel(const ClassifierConfig& config)
    : config_(config) {
  if (config.views == 0 || config.views > 4) {
    throw ConfigError("classifier: view count must be 1..4");
  }
  if (config.nz == 0 || config.kernel % 2 == 0) {
    throw ConfigError("classifier: nz must be positive and kernel odd");
  }
  const std::size_t pad = config.kernel / 2;
  for (std::size_t v = 0; v < config.views; ++v) {
    std::vector<ConvBlock<T>> stem;
    stem.push_back({Conv1d<T>(config.nz, config.stem_channels, config.kernel, pad),
                    SEBlock<T>(config.stem_channels, config.se_reduction)});
    stem.push_back(
        {Conv1d<T>(config.stem_channels, config.stem_channels, config.kernel, pad),
         SEBlock<T>(config.stem_channels, config.se_reduction)});
    stems.push_back(std::move(stem));
  }
  post = {Conv1d<T>(config.fusion_width(), config.head_channels, config.kernel, pad),
          SEBlock<T>(config.head_channels, config.se_reduction)};
  head = Linear<T>(config.head_channels, 2);
}

template <typename T>
void ClassifierModel<T>::init() {
  Rng rng(config_.seed);
  init(rng);
}

template <typename T>
void ClassifierModel<T>::init(Rng& rng) {
  for (auto& stem : stems) {
    for (auto& block : stem) {
      block.conv.init(rng, kReluGain);
      block.se.init(rng);
    }
  }
  post.conv.init(rng, kReluGain);
  post.se.init(rng);
  head.init(rng, 1.0);
}

template <typename T>
void ClassifierModel<T>::validate(const MultiViewSample<T>& sample) const {
  if (sample.views.size() != config_.views) {
    throw UsageError("sample " + sample.trial_id + " has " +
                     std::to_string(sample.views.size()) + " views, model expects " +
                     std::to_string(config_.views));
  }
  const std::size_t len =
      sample.views.front().features.empty() ? 0 : sample.views.front().features.dim(0);
  for (const auto& v : sample.views) {
    if (v.features.empty() || v.features.dim(0) == 0) {
      throw UsageError("sample " + sample.trial_id + ": empty feature sequence (T=0)");
    }
    if (v.features.rank() != 2 || v.features.dim(1) != config_.nz) {
      throw ShapeError("sample " + sample.trial_id + ": features " +
                       shape_string(v.features.shape()) + " do not have width n_z=" +
                       std::to_string(config_.nz));
    }
    if (v.features.dim(0) != len) {
      throw ShapeError("sample " + sample.trial_id +
                       ": views are not time-synchronized (unequal T)");
    }
  }
}

template <typename T>
ClassifierOutput<T> ClassifierModel<T>::classify(const MultiViewSample<T>& sample) const {
  ClassifierTape<T> tape;
  return forward(sample, tape);
}

template <typename T>
ClassifierOutput<T> ClassifierModel<T>::forward(const MultiViewSample<T>& sample,
                                                ClassifierTape<T>& tape) const {
  validate(sample);
  tape = ClassifierTape<T>{};
  const bool se = config_.use_se;
  std::vector<BasicTensor<T>> stem_out;
  for (std::size_t v = 0; v < stems.size(); ++v) {
    tape.stems.emplace_back(stems[v].size());
    BasicTensor<T> x = sample.views[v].features;
    for (std::size_t b = 0; b < stems[v].size(); ++b) {
      x = stems[v][b].forward(x, se, tape.stems[v][b]);
    }
    stem_out.push_back(std::move(x));
  }

  BasicTensor<T> fused;
  if (stem_out.size() == 1) {
    fused = stem_out.front();
    tape.fusion_widths = {fused.dim(1)};
  } else if (config_.use_xva) {
    std::vector<BasicTensor<T>> parts;
    for (std::size_t i = 0; i < stem_out.size(); ++i) {
      for (std::size_t j = i + 1; j < stem_out.size(); ++j) {
        tape.pairs.emplace_back();
        parts.push_back(xva_fuse(stem_out[i], stem_out[j], tape.pairs.back()));
        tape.fusion_widths.push_back(parts.back().dim(1));
      }
    }
    fused = ops::concat_columns(parts);
  } else {
    for (const auto& s : stem_out) tape.fusion_widths.push_back(s.dim(1));
    fused = ops::concat_columns(stem_out);
  }

  const auto out = post.forward(fused, se, tape.post);
  tape.pooled = ops::gap1d(out);
  tape.logits = head.forward(tape.pooled);
  tape.probabilities = ops::softmax(tape.logits, 0);
  tape.recorded = true;

  ClassifierOutput<T> result{tape.logits, tape.probabilities, 0};
  result.predicted = tape.probabilities[1] > tape.probabilities[0] ? 1 : 0;
  return result;
}

template <typename T>
template <bool Accumulate>
ClassifierGradients<T> ClassifierModel<T>::backward_impl(
    const ClassifierTape<T>& tape, const BasicTensor<T>& grad_logits) {
  if (!tape.recorded) throw UsageError("classifier backward called before forward");
  require_shape(grad_logits, {2}, "classifier grad_logits");
  const bool se = config_.use_se;
  ClassifierGradients<T> grads;

  BasicTensor<T> g;
  if constexpr (Accumulate) {
    g = head.backward(tape.pooled, grad_logits);
  } else {
    g = head.backward_input(tape.pooled, grad_logits);
  }
  g = ops::gap1d_backward(tape.post.output.shape(), g);
  const auto g_fused = block_backward<Accumulate>(post, tape.post, g, se, &grads.last_conv);

  const auto parts = ops::split_columns(g_fused, tape.fusion_widths);
  std::vector<BasicTensor<T>> g_stem;
  for (std::size_t v = 0; v < stems.size(); ++v) {
    g_stem.emplace_back(tape.stems[v].back().output.shape());
  }
  if (stems.size() == 1) {
    g_stem[0] = parts[0];
  } else if (config_.use_xva) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < stems.size(); ++i) {
      for (std::size_t j = i + 1; j < stems.size(); ++j, ++k) {
        auto [gi, gj] = xva_fuse_backward(tape.pairs[k], parts[k]);
        ops::add_inplace(g_stem[i], gi);
        ops::add_inplace(g_stem[j], gj);
      }
    }
  } else {
    for (std::size_t v = 0; v < stems.size(); ++v) g_stem[v] = parts[v];
  }

  for (std::size_t v = 0; v < stems.size(); ++v) {
    BasicTensor<T> gv = std::move(g_stem[v]);
    for (std::size_t b = stems[v].size(); b-- > 0;) {
      gv = block_backward<Accumulate, T>(stems[v][b], tape.stems[v][b], gv, se, nullptr);
    }
    grads.inputs.push_back(std::move(gv));
  }
  return grads;
}

template <typename T>
ClassifierGradients<T> ClassifierModel<T>::backward(const ClassifierTape<T>& tape,
                                                    const BasicTensor<T>& grad_logits) {
  return backward_impl<true>(tape, grad_logits);
}

template <typename T>
ClassifierGradients<T> ClassifierModel<T>::input_gradients(
    const ClassifierTape<T>& tape, const BasicTensor<T>& grad_logits) const {
  // The non-accumulating path never writes to the model.
  return const_cast<ClassifierModel&>(*this).template backward_impl<false>(
      tape, grad_logits);
}

template <typename T>
std::vector<Parameter<T>*> ClassifierModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  auto add_block = [&out](ConvBlock<T>& b) {
    for (auto* p : b.conv.parameters()) out.push_back(p);
    for (auto* p : b.se.parameters()) out.push_back(p);
  };
  for (auto& stem : stems) {
    for (auto& b : stem) add_block(b);
  }
  add_block(post);
  for (auto* p : head.parameters()) out.push_back(p);
  return out;
}

template <typename T>
void ClassifierModel<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

// --- Loss & training -------------------------------------------------------------

namespace {
constexpr double kLogClamp = 1e-12;
constexpr double kNumClasses = 2.0;

void check_label(int label) {
  if (label != 0 && label != 1) {
    throw UsageError("label must be 0 or 1, got " + std::to_string(label));
  }
}
}  // namespace

template <typename T>
T loss_xent(const BasicTensor<T>& probabilities, int label) {
  require_shape(probabilities, {2}, "loss_xent probabilities");
  check_label(label);
  const T p = std::max(probabilities[static_cast<std::size_t>(label)],
                       static_cast<T>(kLogClamp));
  return -std::log(p) / static_cast<T>(kNumClasses);
}

template <typename T>
BasicTensor<T> loss_xent_grad_logits(const BasicTensor<T>& probabilities, int label) {
  require_shape(probabilities, {2}, "loss_xent probabilities");
  check_label(label);
  BasicTensor<T> g = probabilities;
  g[static_cast<std::size_t>(label)] -= T(1);
  for (auto& v : g.data()) v /= static_cast<T>(kNumClasses);
  return g;
}

template <typename T>
ClassifierTrainResult train_classifier(ClassifierModel<T>& model,
                                       std::span<const MultiViewSample<T>> samples,
                                       const ClassifierTrainOptions& options) {
  if (samples.size() < 2) throw UsageError("train_classifier: need at least 2 samples");
  std::size_t n_pos = 0;
  for (const auto& s : samples) {
    check_label(s.label);
    n_pos += static_cast<std::size_t>(s.label);
  }
  if (n_pos == 0 || n_pos == samples.size()) {
    throw UsageError("train_classifier: training set contains a single class");
  }
  T class_weight[2] = {T(1), T(1)};
  if (options.balance_classes) {
    const double n = static_cast<double>(samples.size());
    class_weight[0] = static_cast<T>(n / (2.0 * static_cast<double>(samples.size() - n_pos)));
    class_weight[1] = static_cast<T>(n / (2.0 * static_cast<double>(n_pos)));
  }

  ClassifierTrainResult result;
  auto params = model.parameters();
  model.zero_grad();
  Rng rng(options.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.shuffle) rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t idx : order) {
      const auto& sample = samples[idx];
      ClassifierTape<T> tape;
      const auto out = model.forward(sample, tape);
      const T w = class_weight[sample.label];
      total += static_cast<double>(w * loss_xent(out.probabilities, sample.label));
      correct += out.predicted == sample.label ? 1 : 0;
      auto g = loss_xent_grad_logits(out.probabilities, sample.label);
      for (auto& v : g.data()) v *= w;
      model.backward(tape, g);
      adam_step_all(std::span<Parameter<T>* const>(params), options.learning_rate,
                    options.adam);
    }
    const double n = static_cast<double>(samples.size());
    result.epoch_loss.push_back(total / n);
    result.epoch_accuracy.push_back(static_cast<double>(correct) / n);
    if (options.on_epoch) {
      options.on_epoch(epoch + 1, result.epoch_loss.back(), result.epoch_accuracy.back());
    }
  }
  return result;
}

template <typename T>
ClassifierModel<T> ablate(const ClassifierModel<T>& model, Ablation which) {
  ClassifierModel<T> out = model;
  ClassifierConfig cfg = model.config();
  if (which == Ablation::kXva) {
    cfg.use_xva = false;
  } else {
    cfg.use_se = false;
  }
  ClassifierModel<T> shaped(cfg);
  shaped.stems = out.stems;
  shaped.head = out.head;
  if (shaped.post.conv.in_channels() == out.post.conv.in_channels()) {
    shaped.post = out.post;
  } else {
    shaped.post.se = out.post.se;
    Rng rng(cfg.seed ^ 0x5EED'AB1A7EULL);
    shaped.post.conv.init(rng, kReluGain);
  }
  return shaped;
}

#define XVA_INSTANTIATE_CLF(T)                                                   \
  template MultiViewSample<T> select_views(const MultiViewSample<T>&,            \
                                           std::span<const ViewId>);             \
  template class SEBlock<T>;                                                     \
  template BasicTensor<T> xva_fuse(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> xva_fuse(const BasicTensor<T>&, const BasicTensor<T>&, \
                                   XvaTape<T>&);                                 \
  template std::pair<BasicTensor<T>, BasicTensor<T>> xva_fuse_backward(          \
      const XvaTape<T>&, const BasicTensor<T>&);                                 \
  template struct ConvBlock<T>;                                                  \
  template class ClassifierModel<T>;                                             \
  template T loss_xent(const BasicTensor<T>&, int);                              \
  template BasicTensor<T> loss_xent_grad_logits(const BasicTensor<T>&, int);     \
  template ClassifierTrainResult train_classifier(                               \
      ClassifierModel<T>&, std::span<const MultiViewSample<T>>,                  \
      const ClassifierTrainOptions&);                                            \
  template ClassifierModel<T> ablate(const ClassifierModel<T>&, Ablation);

XVA_INSTANTIATE_CLF(float)
XVA_INSTANTIATE_CLF(double)

#undef XVA_INSTANTIATE_CLF

}  // namespace xva
