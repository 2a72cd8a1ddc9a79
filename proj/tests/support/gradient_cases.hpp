#pragma once

// Finite-difference gradient cases shared by the unit tests (a few seeds)
// and the acceptance suite (many seeds). Each case builds its operands from
// the seed, reduces the output to a scalar with random weights, and checks
// every gradient the backward pass produces.

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "xva/autoencoder.hpp"
#include "xva/classifier.hpp"
#include "xva/layers.hpp"
#include "xva/ops.hpp"

namespace xva::testing {

struct GradCase {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

inline void merge(GradCheckResult& acc, const GradCheckResult& r) {
  if (acc.checked == 0 || r.max_rel_error > acc.max_rel_error) {
    const std::size_t n = acc.checked;
    acc = r;
    acc.checked += n;
  } else {
    acc.checked += r.checked;
  }
}

inline void randomize(Parameter<double>& p, Rng& rng, double scale) {
  for (auto& v : p.value.data()) v = rng.gaussian(0.0, scale);
  p.zero_grad();
}

/// Entries per tensor checked in the full-model cases.
inline constexpr std::size_t kModelSample = 24;

/// Whole-model cases redraw their inputs while any ReLU/SELU input lies
/// closer than this to zero: a finite-difference stencil across a kink
/// does not estimate a derivative.
inline constexpr double kKinkMargin = 1e-5;
inline constexpr int kMaxRedraws = 50;

inline double kink_distance(const Tensor64& pre) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : pre.data()) m = std::min(m, std::abs(v));
  return m;
}

inline double kink_distance(std::span<const Tensor64> pres) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : pres) m = std::min(m, kink_distance(p));
  return m;
}

namespace detail {

// d/dx sum(g * layer(x)) for a layer with weight + bias parameters.
template <typename Layer>
GradCheckResult check_layer(Layer& layer, Tensor64 x, Rng& rng, double weight_scale) {
  randomize(layer.weight, rng, weight_scale);
  randomize(layer.bias, rng, 0.5);
  const Tensor64 g = random_tensor(layer.forward(x).shape(), rng);
  const Tensor64 gx = layer.backward(x, g);
  const Tensor64 gw = layer.weight.grad;
  const Tensor64 gb = layer.bias.grad;
  auto f = [&] { return weighted_sum(layer.forward(x), g); };
  GradCheckResult r = check_gradient(x, gx, f);
  merge(r, check_gradient(layer.weight.value, gw, f));
  merge(r, check_gradient(layer.bias.value, gb, f));
  return r;
}

template <typename Fwd, typename Bwd>
GradCheckResult check_unary(Tensor64 x, Rng& rng, Fwd fwd, Bwd bwd) {
  const Tensor64 y = fwd(x);
  const Tensor64 g = random_tensor(y.shape(), rng);
  const Tensor64 gx = bwd(x, y, g);
  return check_gradient(x, gx, [&] { return weighted_sum(fwd(x), g); });
}

inline std::vector<Tensor64> random_images(std::size_t n, const Shape& shape, Rng& rng) {
  std::vector<Tensor64> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_tensor(shape, rng, 0.5));
  return out;
}

// Keeps reconstruction losses O(1) so finite differences are not swamped
// by round-off in f.
inline std::vector<Tensor64> nearby(const std::vector<Tensor64>& images, Rng& rng,
                                    double scale) {
  std::vector<Tensor64> out = images;
  for (auto& img : out) {
    for (auto& v : img.data()) v += rng.gaussian(0.0, scale);
  }
  return out;
}

inline MultiViewSample<double> random_sample(std::size_t views, std::size_t t,
                                             std::size_t nz, Rng& rng) {
  MultiViewSample<double> s;
  for (std::size_t v = 0; v < views; ++v) {
    s.views.push_back({static_cast<ViewId>(v), random_tensor({t, nz}, rng)});
  }
  s.label = static_cast<int>(rng.uniform_int(2));
  return s;
}

inline GradCheckResult check_classifier(const ClassifierConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ClassifierModel<double> model(cfg);
  model.init(rng);
  for (auto* p : model.parameters()) {
    if (p->value.rank() == 1) randomize(*p, rng, 0.1);
  }
  MultiViewSample<double> sample;
  ClassifierTape<double> tape;
  ClassifierOutput<double> out;
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    sample = random_sample(cfg.views, 7 + seed % 5, cfg.nz, rng);
    out = model.forward(sample, tape);
    double margin = std::min(kink_distance(tape.post.pre), kink_distance(tape.post.se.hidden));
    for (const auto& stem : tape.stems) {
      for (const auto& block : stem) {
        margin = std::min({margin, kink_distance(block.pre), kink_distance(block.se.hidden)});
      }
    }
    if (margin >= kKinkMargin) break;
  }

  auto loss = [&] {
    const auto o = model.classify(sample);
    return loss_xent(o.probabilities, sample.label);
  };
  model.zero_grad();
  const auto grads =
      model.backward(tape, loss_xent_grad_logits(out.probabilities, sample.label));

  GradCheckResult r;
  std::uint64_t sub = seed;
  for (auto* p : model.parameters()) {
    const Tensor64 analytic = p->grad;
    merge(r, check_gradient(p->value, analytic, loss, kModelSample, ++sub));
  }
  for (std::size_t v = 0; v < cfg.views; ++v) {
    merge(r, check_gradient(sample.views[v].features, grads.inputs[v], loss, kModelSample,
                            ++sub));
  }
  return r;
}

}  // namespace detail

inline std::vector<GradCase> gradient_cases() {
  using namespace detail;
  std::vector<GradCase> cases;

  cases.push_back({"conv2d", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Conv2d<double> layer(3, 4, 3, 1, 2);
                     return check_layer(layer, random_tensor({3, 7, 6}, rng), rng, 0.5);
                   }});
  cases.push_back({"conv_transpose2d", [](std::uint64_t seed) {
                     Rng rng(seed);
                     ConvTranspose2d<double> layer(3, 4, 3, {2, 1, 1, 0});
                     return check_layer(layer, random_tensor({3, 4, 5}, rng), rng, 0.5);
                   }});
  cases.push_back({"conv1d", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Conv1d<double> layer(3, 5, 3, 1);
                     return check_layer(layer, random_tensor({9, 3}, rng), rng, 0.5);
                   }});
  cases.push_back({"linear", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Linear<double> layer(6, 4);
                     return check_layer(layer, random_tensor({6}, rng), rng, 0.5);
                   }});
  cases.push_back({"selu", [](std::uint64_t seed) {
                     Rng rng(seed);
                     return check_unary(
                         random_tensor({4, 5}, rng), rng, [](auto& x) { return ops::selu(x); },
                         [](auto& x, auto&, auto& g) { return ops::selu_backward(x, g); });
                   }});
  cases.push_back({"relu", [](std::uint64_t seed) {
                     Rng rng(seed);
                     return check_unary(
                         random_tensor({4, 5}, rng), rng, [](auto& x) { return ops::relu(x); },
                         [](auto& x, auto&, auto& g) { return ops::relu_backward(x, g); });
                   }});
  cases.push_back({"sigmoid", [](std::uint64_t seed) {
                     Rng rng(seed);
                     return check_unary(
                         random_tensor({4, 5}, rng), rng,
                         [](auto& x) { return ops::sigmoid(x); },
                         [](auto&, auto& y, auto& g) { return ops::sigmoid_backward(y, g); });
                   }});
  cases.push_back({"softmax", [](std::uint64_t seed) {
                     Rng rng(seed);
                     GradCheckResult r;
                     for (std::size_t axis : {0, 1}) {
                       merge(r, check_unary(
                                    random_tensor({4, 5}, rng, 2.0), rng,
                                    [axis](auto& x) { return ops::softmax(x, axis); },
                                    [axis](auto&, auto& y, auto& g) {
                                      return ops::softmax_backward(y, g, axis);
                                    }));
                     }
                     return r;
                   }});
  cases.push_back({"gap", [](std::uint64_t seed) {
                     Rng rng(seed);
                     GradCheckResult r = check_unary(
                         random_tensor({3, 4, 5}, rng), rng,
                         [](auto& x) { return ops::gap2d(x); },
                         [](auto& x, auto&, auto& g) { return ops::gap2d_backward(x.shape(), g); });
                     merge(r, check_unary(
                                  random_tensor({6, 3}, rng), rng,
                                  [](auto& x) { return ops::gap1d(x); },
                                  [](auto& x, auto&, auto& g) {
                                    return ops::gap1d_backward(x.shape(), g);
                                  }));
                     return r;
                   }});
  cases.push_back({"se_block", [](std::uint64_t seed) {
                     Rng rng(seed);
                     SEBlock<double> se(8, 4);
                     randomize(se.w1, rng, 0.7);
                     randomize(se.w2, rng, 0.7);
                     Tensor64 u = random_tensor({6, 8}, rng);
                     const Tensor64 g = random_tensor({6, 8}, rng);
                     SETape<double> tape;
                     se.forward(u, tape);
                     const Tensor64 gu = se.backward(tape, g);
                     const Tensor64 gw1 = se.w1.grad;
                     const Tensor64 gw2 = se.w2.grad;
                     auto f = [&] { return weighted_sum(se.forward(u), g); };
                     GradCheckResult r = check_gradient(u, gu, f);
                     merge(r, check_gradient(se.w1.value, gw1, f));
                     merge(r, check_gradient(se.w2.value, gw2, f));
                     return r;
                   }});
  cases.push_back({"xva_fuse", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor64 v1 = random_tensor({5, 4}, rng);
                     Tensor64 v2 = random_tensor({5, 4}, rng);
                     const Tensor64 g = random_tensor({5, 8}, rng);
                     XvaTape<double> tape;
                     xva_fuse(v1, v2, tape);
                     const auto [g1, g2] = xva_fuse_backward(tape, g);
                     auto f = [&] { return weighted_sum(xva_fuse(v1, v2), g); };
                     GradCheckResult r = check_gradient(v1, g1, f);
                     merge(r, check_gradient(v2, g2, f));
                     return r;
                   }});
  cases.push_back({"loss_dae", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto targets = random_images(3, {3, 6, 5}, rng);
                     auto recons = nearby(targets, rng, 0.1);
                     std::vector<Tensor64> grads;
                     loss_final_ae_with_grad<double>(nullptr, targets, recons, grads);
                     auto f = [&] { return loss_dae<double>(targets, recons); };
                     GradCheckResult r;
                     for (std::size_t i = 0; i < recons.size(); ++i) {
                       merge(r, check_gradient(recons[i], grads[i], f));
                     }
                     return r;
                   }});
  cases.push_back({"loss_perc", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto phi = PerceptualExtractor<double>::random(seed);
                     const Tensor64 q = random_tensor({3, 12, 12}, rng, 0.5);
                     Tensor64 r_img = random_tensor({3, 12, 12}, rng, 0.5);
                     Tensor64 grad;
                     loss_perc_with_grad(phi, q, r_img, grad);
                     return check_gradient(r_img, grad,
                                           [&] { return loss_perc(phi, q, r_img); });
                   }});
  cases.push_back({"loss_final_ae", [](std::uint64_t seed) {
                     Rng rng(seed);
                     const auto phi = PerceptualExtractor<double>::random(seed + 1);
                     const auto targets = random_images(2, {3, 10, 10}, rng);
                     auto recons = nearby(targets, rng, 0.1);
                     std::vector<Tensor64> grads;
                     loss_final_ae_with_grad(&phi, std::span<const Tensor64>(targets),
                                             std::span<const Tensor64>(recons), grads);
                     auto f = [&] { return loss_final_ae<double>(phi, targets, recons); };
                     GradCheckResult r;
                     for (std::size_t i = 0; i < recons.size(); ++i) {
                       merge(r, check_gradient(recons[i], grads[i], f));
                     }
                     return r;
                   }});
  cases.push_back({"loss_xent", [](std::uint64_t seed) {
                     Rng rng(seed);
                     Tensor64 logits = random_tensor({2}, rng, 2.0);
                     const int label = static_cast<int>(seed % 2);
                     const Tensor64 grad =
                         loss_xent_grad_logits(ops::softmax(logits, 0), label);
                     return check_gradient(logits, grad, [&] {
                       return loss_xent(ops::softmax(logits, 0), label);
                     });
                   }});
  cases.push_back({"autoencoder", [](std::uint64_t seed) {
                     Rng rng(seed);
                     AEModel<double> ae({8, 16, 16});
                     ae.init(rng);
                     for (auto* p : ae.parameters()) {
                       if (p->value.rank() == 1) randomize(*p, rng, 0.1);
                     }
                     const auto phi = PerceptualExtractor<double>::random(seed + 7);
                     Tensor64 noisy, clean, recon;
                     EncoderTape<double> et;
                     DecoderTape<double> dt;
                     for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
                       noisy = random_tensor({3, 16, 16}, rng, 0.5);
                       recon = ae.decode(ae.encode(noisy, et), dt);
                       clean = nearby({recon}, rng, 0.05).front();
                       PerceptualTape<double> pt;
                       phi.features(recon, pt);
                       const std::span<const Tensor64> dec_pre(dt.pre.data(), dt.pre.size() - 1);
                       const double margin =
                           std::min({kink_distance(et.pre), kink_distance(dt.expand_pre),
                                     kink_distance(dec_pre), kink_distance(pt.pre)});
                       if (margin >= kKinkMargin) break;
                     }

                     auto loss = [&] {
                       const Tensor64 r_img = ae.decode(ae.encode(noisy));
                       return loss_final_ae<double>(phi, std::span(&clean, 1),
                                                    std::span(&r_img, 1));
                     };
                     std::vector<Tensor64> grads;
                     loss_final_ae_with_grad<double>(&phi, std::span(&clean, 1), std::span(&recon, 1),
                                             grads);
                     ae.zero_grad();
                     const Tensor64 gin =
                         ae.backward_encoder(et, ae.backward_decoder(dt, grads[0]));

                     GradCheckResult r;
                     std::uint64_t sub = seed;
                     for (auto* p : ae.parameters()) {
                       const Tensor64 analytic = p->grad;
                       merge(r, check_gradient(p->value, analytic, loss, kModelSample, ++sub));
                     }
                     merge(r, check_gradient(noisy, gin, loss, kModelSample, ++sub));
                     return r;
                   }});
  cases.push_back({"classifier", [](std::uint64_t seed) {
                     ClassifierConfig cfg;
                     cfg.nz = 4;
                     cfg.stem_channels = 8;
                     cfg.head_channels = 8;
                     return check_classifier(cfg, seed);
                   }});
  cases.push_back({"classifier_no_xva", [](std::uint64_t seed) {
                     ClassifierConfig cfg;
                     cfg.nz = 4;
                     cfg.views = 3;
                     cfg.use_xva = false;
                     cfg.stem_channels = 8;
                     cfg.head_channels = 8;
                     return check_classifier(cfg, seed);
                   }});
  cases.push_back({"classifier_three_view_xva", [](std::uint64_t seed) {
                     ClassifierConfig cfg;
                     cfg.nz = 3;
                     cfg.views = 3;
                     cfg.stem_channels = 4;
                     cfg.head_channels = 8;
                     return check_classifier(cfg, seed);
                   }});
  return cases;
}

}  // namespace xva::testing
