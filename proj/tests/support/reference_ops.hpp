#pragma once

// Direct-loop references, independent of the im2col kernels.

#include <cmath>

#include "xva/tensor.hpp"

namespace xva::testing {

inline Tensor64 conv2d_ref(const Tensor64& x, const Tensor64& w, const Tensor64& b, std::size_t s,
                    std::size_t p) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(0), k = w.dim(2);
  const std::size_t Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
  Tensor64 y({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double acc = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const long yy = static_cast<long>(i * s + u) - static_cast<long>(p);
              const long xx = static_cast<long>(j * s + v) - static_cast<long>(p);
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
              acc += w[((o * C + c) * k + u) * k + v] * x[(c * H + yy) * W + xx];
            }
        y[(o * Ho + i) * Wo + j] = acc;
      }
  return y;
}

// Scatter form: every input pixel spreads its kernel-weighted value.
inline Tensor64 conv_transpose2d_ref(const Tensor64& x, const Tensor64& w, const Tensor64& b,
                              std::size_t s, std::size_t p, std::size_t oph, std::size_t opw) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = w.dim(1), k = w.dim(2);
  const std::size_t Ho = s * (H - 1) + k - 2 * p + oph, Wo = s * (W - 1) + k - 2 * p + opw;
  Tensor64 y({O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < Ho * Wo; ++i) y[o * Ho * Wo + i] = b[o];
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t o = 0; o < O; ++o)
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const long yy = static_cast<long>(i * s + u) - static_cast<long>(p);
              const long xx = static_cast<long>(j * s + v) - static_cast<long>(p);
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(Ho) || xx >= static_cast<long>(Wo)) continue;
              y[(o * Ho + yy) * Wo + xx] += w[((c * O + o) * k + u) * k + v] * x[(c * H + i) * W + j];
            }
  return y;
}

inline Tensor64 conv1d_ref(const Tensor64& x, const Tensor64& w, const Tensor64& b, std::size_t p) {
  const std::size_t T = x.dim(0), C = x.dim(1), O = w.dim(0), k = w.dim(2);
  const std::size_t To = T + 2 * p - k + 1;
  Tensor64 y({To, O});
  for (std::size_t t = 0; t < To; ++t)
    for (std::size_t o = 0; o < O; ++o) {
      double acc = b[o];
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const long tt = static_cast<long>(t + j) - static_cast<long>(p);
          if (tt < 0 || tt >= static_cast<long>(T)) continue;
          acc += w[(o * C + c) * k + j] * x[tt * C + c];
        }
      y[t * O + o] = acc;
    }
  return y;
}

}  // namespace xva::testing
