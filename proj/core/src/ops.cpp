#include "xva/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace xva::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
MatMap<T> as_matrix(BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return MatMap<T>(t.ptr(), static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
}

template <typename T>
ConstMatMap<T> as_matrix(const BasicTensor<T>& t, std::size_t rows,
                         std::size_t cols) {
  return ConstMatMap<T>(t.ptr(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

struct Plane {
  std::size_t channels, in_h, in_w, out_h, out_w, kernel, stride, padding;
};

// cols is (channels * k * k) x (out_h * out_w); row = (c * k + ky) * k + kx.
template <typename T>
void im2col(const T* x, const Plane& g, T* cols) {
  const std::size_t k = g.kernel;
  const std::size_t out_hw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* xc = x + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.padding);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w))
                          ? T(0)
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add cols back into x (x is zeroed first).
template <typename T>
void col2im(const T* cols, const Plane& g, T* x) {
  const std::size_t k = g.kernel;
  const std::size_t out_hw = g.out_h * g.out_w;
  std::fill(x, x + g.channels * g.in_h * g.in_w, T(0));
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* xc = x + c * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * out_hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          const T* src = row + oy * g.out_w;
          T* dst = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.padding);
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

struct Line {
  std::size_t channels, in_t, out_t, kernel, stride, padding;
};

// cols is out_t x (channels * k); column = c * k + j.
template <typename T>
void im2col_1d(const T* x, const Line& g, T* cols) {
  const std::size_t width = g.channels * g.kernel;
  for (std::size_t t = 0; t < g.out_t; ++t) {
    T* row = cols + t * width;
    for (std::size_t j = 0; j < g.kernel; ++j) {
      const long it = static_cast<long>(t * g.stride + j) -
                      static_cast<long>(g.padding);
      if (it < 0 || it >= static_cast<long>(g.in_t)) {
        for (std::size_t c = 0; c < g.channels; ++c) row[c * g.kernel + j] = T(0);
        continue;
      }
      const T* src = x + static_cast<std::size_t>(it) * g.channels;
      for (std::size_t c = 0; c < g.channels; ++c) row[c * g.kernel + j] = src[c];
    }
  }
}

template <typename T>
void col2im_1d(const T* cols, const Line& g, T* x) {
  const std::size_t width = g.channels * g.kernel;
  std::fill(x, x + g.in_t * g.channels, T(0));
  for (std::size_t t = 0; t < g.out_t; ++t) {
    const T* row = cols + t * width;
    for (std::size_t j = 0; j < g.kernel; ++j) {
      const long it = static_cast<long>(t * g.stride + j) -
                      static_cast<long>(g.padding);
      if (it < 0 || it >= static_cast<long>(g.in_t)) continue;
      T* dst = x + static_cast<std::size_t>(it) * g.channels;
      for (std::size_t c = 0; c < g.channels; ++c) dst[c] += row[c * g.kernel + j];
    }
  }
}

template <typename T>
void check_square_kernel(const BasicTensor<T>& weight, const char* what) {
  require_rank(weight, 4, what);
  if (weight.dim(2) != weight.dim(3)) {
    throw ShapeError(std::string(what) + ": kernel must be square, got " +
                     shape_string(weight.shape()));
  }
}

template <typename T>
Plane conv2d_plane(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                   Conv2dGeometry g) {
  require_rank(input, 3, "conv2d input");
  check_square_kernel(weight, "conv2d weight");
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input " + shape_string(input.shape()) +
                     " has " + std::to_string(input.dim(0)));
  }
  if (g.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t k = weight.dim(2);
  return Plane{input.dim(0),
               input.dim(1),
               input.dim(2),
               conv_output_extent(input.dim(1), k, g.padding, g.stride),
               conv_output_extent(input.dim(2), k, g.padding, g.stride),
               k,
               g.stride,
               g.padding};
}

template <typename T>
Plane conv_transpose2d_plane(const BasicTensor<T>& input,
                             const BasicTensor<T>& weight,
                             ConvTranspose2dGeometry g) {
  require_rank(input, 3, "conv_transpose2d input");
  check_square_kernel(weight, "conv_transpose2d weight");
  if (weight.dim(0) != input.dim(0)) {
    throw ShapeError("conv_transpose2d: weight expects " +
                     std::to_string(weight.dim(0)) + " input channels, input " +
                     shape_string(input.shape()) + " has " +
                     std::to_string(input.dim(0)));
  }
  if (g.stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
  if (g.output_padding_h >= g.stride || g.output_padding_w >= g.stride) {
    throw ShapeError("conv_transpose2d: output_padding must be smaller than stride");
  }
  const std::size_t k = weight.dim(2);
  const std::size_t out_h = conv_transpose_output_extent(
      input.dim(1), k, g.padding, g.stride, g.output_padding_h);
  const std::size_t out_w = conv_transpose_output_extent(
      input.dim(2), k, g.padding, g.stride, g.output_padding_w);
  // Plane describes the forward conv that maps (out_h, out_w) -> input extent.
  Plane p{weight.dim(1), out_h, out_w, input.dim(1), input.dim(2), k, g.stride,
          g.padding};
  if (conv_output_extent(out_h, k, g.padding, g.stride) != input.dim(1) ||
      conv_output_extent(out_w, k, g.padding, g.stride) != input.dim(2)) {
    throw ShapeError("conv_transpose2d: inconsistent geometry for input " +
                     shape_string(input.shape()));
  }
  return p;
}

template <typename T>
Line conv1d_line(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                 Conv1dGeometry g) {
  require_rank(input, 2, "conv1d input");
  require_rank(weight, 3, "conv1d weight");
  if (weight.dim(1) != input.dim(1)) {
    throw ShapeError("conv1d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input " + shape_string(input.shape()) +
                     " has " + std::to_string(input.dim(1)));
  }
  if (g.stride == 0) throw ShapeError("conv1d: stride must be positive");
  const std::size_t k = weight.dim(2);
  return Line{input.dim(1), input.dim(0),
              conv_output_extent(input.dim(0), k, g.padding, g.stride), k,
              g.stride, g.padding};
}

template <typename T>
void check_bias(const BasicTensor<T>& bias, std::size_t channels,
                const char* what) {
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw ShapeError(std::string(what) + ": bias shape " +
                     shape_string(bias.shape()) + " does not match " +
                     std::to_string(channels) + " output channels");
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t padding, std::size_t stride) {
  if (kernel > in + 2 * padding) {
    throw ShapeError("kernel " + std::to_string(kernel) +
                     " larger than padded extent " +
                     std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel,
                                         std::size_t padding,
                                         std::size_t stride,
                                         std::size_t output_padding) {
  const std::size_t full = stride * (in - 1) + kernel + output_padding;
  if (full <= 2 * padding) {
    throw ShapeError("conv_transpose2d: padding consumes the whole output");
  }
  return full - 2 * padding;
}

// --- conv2d ------------------------------------------------------------------

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, Conv2dGeometry geometry) {
  const Plane g = conv2d_plane(input, weight, geometry);
  const std::size_t c_out = weight.dim(0);
  check_bias(bias, c_out, "conv2d");
  const std::size_t K = g.channels * g.kernel * g.kernel;
  const std::size_t P = g.out_h * g.out_w;

  std::vector<T> cols(K * P);
  im2col(input.ptr(), g, cols.data());

  BasicTensor<T> out({c_out, g.out_h, g.out_w});
  auto out_m = as_matrix(out, c_out, P);
  out_m.noalias() = as_matrix(weight, c_out, K) *
                    ConstMatMap<T>(cols.data(), static_cast<Eigen::Index>(K),
                                   static_cast<Eigen::Index>(P));
  for (std::size_t c = 0; c < c_out; ++c) {
    out_m.row(static_cast<Eigen::Index>(c)).array() += bias[c];
  }
  return out;
}

template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_output, Conv2dGeometry geometry,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_weight,
                     BasicTensor<T>* grad_bias) {
  const Plane g = conv2d_plane(input, weight, geometry);
  const std::size_t c_out = weight.dim(0);
  require_shape(grad_output, {c_out, g.out_h, g.out_w}, "conv2d grad_output");
  const std::size_t K = g.channels * g.kernel * g.kernel;
  const std::size_t P = g.out_h * g.out_w;
  const auto gy = as_matrix(grad_output, c_out, P);

  std::vector<T> cols(K * P);
  if (grad_weight) {
    require_shape(*grad_weight, weight.shape(), "conv2d grad_weight");
    im2col(input.ptr(), g, cols.data());
    as_matrix(*grad_weight, c_out, K).noalias() +=
        gy * ConstMatMap<T>(cols.data(), static_cast<Eigen::Index>(K),
                            static_cast<Eigen::Index>(P))
                 .transpose();
  }
  if (grad_bias) {
    check_bias(*grad_bias, c_out, "conv2d grad_bias");
    for (std::size_t c = 0; c < c_out; ++c) {
      T acc = T(0);
      for (std::size_t i = 0; i < P; ++i) acc += grad_output[c * P + i];
      (*grad_bias)[c] += acc;
    }
  }
  if (grad_input) {
    MatMap<T>(cols.data(), static_cast<Eigen::Index>(K),
              static_cast<Eigen::Index>(P))
        .noalias() = as_matrix(weight, c_out, K).transpose() * gy;
    *grad_input = BasicTensor<T>(input.shape());
    col2im(cols.data(), g, grad_input->ptr());
  }
}

// --- conv_transpose2d ------------------------------------------------------

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& input,
                                const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias,
                                ConvTranspose2dGeometry geometry) {
  const Plane g = conv_transpose2d_plane(input, weight, geometry);
  const std::size_t c_in = input.dim(0);
  const std::size_t c_out = g.channels;
  check_bias(bias, c_out, "conv_transpose2d");
  const std::size_t K = c_out * g.kernel * g.kernel;
  const std::size_t P = g.out_h * g.out_w;  // input spatial size

  std::vector<T> cols(K * P);
  MatMap<T>(cols.data(), static_cast<Eigen::Index>(K),
            static_cast<Eigen::Index>(P))
      .noalias() =
      as_matrix(weight, c_in, K).transpose() * as_matrix(input, c_in, P);

  BasicTensor<T> out({c_out, g.in_h, g.in_w});
  col2im(cols.data(), g, out.ptr());
  const std::size_t hw = g.in_h * g.in_w;
  for (std::size_t c = 0; c < c_out; ++c) {
    T* plane = out.ptr() + c * hw;
    for (std::size_t i = 0; i < hw; ++i) plane[i] += bias[c];
  }
  return out;
}

template <typename T>
void conv_transpose2d_backward(const BasicTensor<T>& input,
                               const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_output,
                               ConvTranspose2dGeometry geometry,
                               BasicTensor<T>* grad_input,
                               BasicTensor<T>* grad_weight,
                               BasicTensor<T>* grad_bias) {
  const Plane g = conv_transpose2d_plane(input, weight, geometry);
  const std::size_t c_in = input.dim(0);
  const std::size_t c_out = g.channels;
  require_shape(grad_output, {c_out, g.in_h, g.in_w},
                "conv_transpose2d grad_output");
  const std::size_t K = c_out * g.kernel * g.kernel;
  const std::size_t P = g.out_h * g.out_w;

  std::vector<T> cols(K * P);
  im2col(grad_output.ptr(), g, cols.data());
  const ConstMatMap<T> gcols(cols.data(), static_cast<Eigen::Index>(K),
                             static_cast<Eigen::Index>(P));
  if (grad_weight) {
    require_shape(*grad_weight, weight.shape(), "conv_transpose2d grad_weight");
    as_matrix(*grad_weight, c_in, K).noalias() +=
        as_matrix(input, c_in, P) * gcols.transpose();
  }
  if (grad_bias) {
    check_bias(*grad_bias, c_out, "conv_transpose2d grad_bias");
    const std::size_t hw = g.in_h * g.in_w;
    for (std::size_t c = 0; c < c_out; ++c) {
      const T* plane = grad_output.ptr() + c * hw;
      T s = 0;
      for (std::size_t i = 0; i < hw; ++i) s += plane[i];
      (*grad_bias)[c] += s;
    }
  }
  if (grad_input) {
    *grad_input = BasicTensor<T>(input.shape());
    as_matrix(*grad_input, c_in, P).noalias() = as_matrix(weight, c_in, K) * gcols;
  }
}

// --- conv1d ------------------------------------------------------------------

template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, Conv1dGeometry geometry) {
  const Line g = conv1d_line(input, weight, geometry);
  const std::size_t c_out = weight.dim(0);
  check_bias(bias, c_out, "conv1d");
  const std::size_t K = g.channels * g.kernel;

  std::vector<T> cols(g.out_t * K);
  im2col_1d(input.ptr(), g, cols.data());

  BasicTensor<T> out({g.out_t, c_out});
  auto out_m = as_matrix(out, g.out_t, c_out);
  out_m.noalias() = ConstMatMap<T>(cols.data(), static_cast<Eigen::Index>(g.out_t),
                                   static_cast<Eigen::Index>(K)) *
                    as_matrix(weight, c_out, K).transpose();
  const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(
      bias.ptr(), static_cast<Eigen::Index>(c_out));
  out_m.rowwise() += b;
  return out;
}

template <typename T>
void conv1d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_output, Conv1dGeometry geometry,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_weight,
                     BasicTensor<T>* grad_bias) {
  const Line g = conv1d_line(input, weight, geometry);
  const std::size_t c_out = weight.dim(0);
  require_shape(grad_output, {g.out_t, c_out}, "conv1d grad_output");
  const std::size_t K = g.channels * g.kernel;
  const auto gy = as_matrix(grad_output, g.out_t, c_out);

  std::vector<T> cols(g.out_t * K);
  if (grad_weight) {
    require_shape(*grad_weight, weight.shape(), "conv1d grad_weight");
    im2col_1d(input.ptr(), g, cols.data());
    as_matrix(*grad_weight, c_out, K).noalias() +=
        gy.transpose() * ConstMatMap<T>(cols.data(),
                                        static_cast<Eigen::Index>(g.out_t),
                                        static_cast<Eigen::Index>(K));
  }
  if (grad_bias) {
    check_bias(*grad_bias, c_out, "conv1d grad_bias");
    for (std::size_t c = 0; c < c_out; ++c) {
      T acc = T(0);
      for (std::size_t t = 0; t < g.out_t; ++t) acc += grad_output[t * c_out + c];
      (*grad_bias)[c] += acc;
    }
  }
  if (grad_input) {
    MatMap<T>(cols.data(), static_cast<Eigen::Index>(g.out_t),
              static_cast<Eigen::Index>(K))
        .noalias() = gy * as_matrix(weight, c_out, K);
    *grad_input = BasicTensor<T>(input.shape());
    col2im_1d(cols.data(), g, grad_input->ptr());
  }
}

// --- linear --------------------------------------------------------------------

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require_rank(weight, 2, "linear weight");
  if (input.size() != weight.dim(1)) {
    throw ShapeError("linear: weight expects " + std::to_string(weight.dim(1)) +
                     " inputs, got " + shape_string(input.shape()));
  }
  check_bias(bias, weight.dim(0), "linear");
  BasicTensor<T> out({weight.dim(0)});
  const std::size_t n_in = weight.dim(1);
  for (std::size_t o = 0; o < weight.dim(0); ++o) {
    const T* w = weight.ptr() + o * n_in;
    T s = bias[o];
    for (std::size_t i = 0; i < n_in; ++i) s += w[i] * input[i];
    out[o] = s;
  }
  return out;
}

template <typename T>
void linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_output,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_weight,
                     BasicTensor<T>* grad_bias) {
  const std::size_t n_out = weight.dim(0);
  const std::size_t n_in = weight.dim(1);
  if (grad_output.size() != n_out || input.size() != n_in) {
    throw ShapeError("linear_backward: shape mismatch");
  }
  if (grad_weight) {
    require_shape(*grad_weight, weight.shape(), "linear grad_weight");
    for (std::size_t o = 0; o < n_out; ++o) {
      T* gw = grad_weight->ptr() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) gw[i] += grad_output[o] * input[i];
    }
  }
  if (grad_bias) {
    check_bias(*grad_bias, n_out, "linear grad_bias");
    for (std::size_t o = 0; o < n_out; ++o) (*grad_bias)[o] += grad_output[o];
  }
  if (grad_input) {
    *grad_input = BasicTensor<T>(input.shape());
    for (std::size_t o = 0; o < n_out; ++o) {
      const T* w = weight.ptr() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) (*grad_input)[i] += w[i] * grad_output[o];
    }
  }
}

// --- pooling -------------------------------------------------------------------

template <typename T>
BasicTensor<T> gap2d(const BasicTensor<T>& input) {
  require_rank(input, 3, "gap2d input");
  const std::size_t hw = input.dim(1) * input.dim(2);
  BasicTensor<T> out({input.dim(0)});
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    const T* p = input.ptr() + c * hw;
    T s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += p[i];
    out[c] = s / static_cast<T>(hw);
  }
  return out;
}

template <typename T>
BasicTensor<T> gap2d_backward(const Shape& input_shape,
                              const BasicTensor<T>& grad_output) {
  if (input_shape.size() != 3 || grad_output.size() != input_shape[0]) {
    throw ShapeError("gap2d_backward: shape mismatch");
  }
  const std::size_t hw = input_shape[1] * input_shape[2];
  BasicTensor<T> gx(input_shape);
  for (std::size_t c = 0; c < input_shape[0]; ++c) {
    const T v = grad_output[c] / static_cast<T>(hw);
    std::fill(gx.ptr() + c * hw, gx.ptr() + (c + 1) * hw, v);
  }
  return gx;
}

template <typename T>
BasicTensor<T> gap1d(const BasicTensor<T>& input) {
  require_rank(input, 2, "gap1d input");
  const std::size_t len = input.dim(0), ch = input.dim(1);
  BasicTensor<T> out({ch});
  for (std::size_t t = 0; t < len; ++t) {
    const T* row = input.ptr() + t * ch;
    for (std::size_t c = 0; c < ch; ++c) out[c] += row[c];
  }
  for (std::size_t c = 0; c < ch; ++c) out[c] /= static_cast<T>(len);
  return out;
}

template <typename T>
BasicTensor<T> gap1d_backward(const Shape& input_shape,
                              const BasicTensor<T>& grad_output) {
  if (input_shape.size() != 2 || grad_output.size() != input_shape[1]) {
    throw ShapeError("gap1d_backward: shape mismatch");
  }
  const std::size_t len = input_shape[0], ch = input_shape[1];
  BasicTensor<T> gx(input_shape);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      gx[t * ch + c] = grad_output[c] / static_cast<T>(len);
    }
  }
  return gx;
}

// --- activations ---------------------------------------------------------------

template <typename T>
BasicTensor<T> selu(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  const T lambda = static_cast<T>(kSeluLambda);
  const T la = static_cast<T>(kSeluLambda * kSeluAlpha);
  for (auto& v : y.data()) v = v > T(0) ? lambda * v : la * std::expm1(v);
  return y;
}

template <typename T>
BasicTensor<T> selu_backward(const BasicTensor<T>& x,
                             const BasicTensor<T>& grad_output) {
  require_shape(grad_output, x.shape(), "selu_backward");
  BasicTensor<T> g = grad_output;
  const T lambda = static_cast<T>(kSeluLambda);
  const T la = static_cast<T>(kSeluLambda * kSeluAlpha);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] *= x[i] > T(0) ? lambda : la * std::exp(x[i]);
  }
  return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.data()) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x,
                             const BasicTensor<T>& grad_output) {
  require_shape(grad_output, x.shape(), "relu_backward");
  BasicTensor<T> g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > T(0))) g[i] = T(0);
  }
  return g;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.data()) {
    v = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                  : std::exp(v) / (T(1) + std::exp(v));
  }
  return y;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& grad_output) {
  require_shape(grad_output, y.shape(), "sigmoid_backward");
  BasicTensor<T> g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (T(1) - y[i]);
  return g;
}

namespace {
struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("softmax axis " + std::to_string(axis) +
                     " out of range for shape " + shape_string(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}
}  // namespace

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  BasicTensor<T> y(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T mx = x[base];
      for (std::size_t i = 1; i < s.n; ++i) mx = std::max(mx, x[base + i * s.inner]);
      T sum = 0;
      for (std::size_t i = 0; i < s.n; ++i) {
        const T e = std::exp(x[base + i * s.inner] - mx);
        y[base + i * s.inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < s.n; ++i) y[base + i * s.inner] /= sum;
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& grad_output,
                                std::size_t axis) {
  require_shape(grad_output, y.shape(), "softmax_backward");
  const AxisSplit s = split_axis(y.shape(), axis);
  BasicTensor<T> g(y.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T inner = 0;
      for (std::size_t i = 0; i < s.n; ++i) {
        inner += y[base + i * s.inner] * grad_output[base + i * s.inner];
      }
      for (std::size_t i = 0; i < s.n; ++i) {
        const std::size_t idx = base + i * s.inner;
        g[idx] = y[idx] * (grad_output[idx] - inner);
      }
    }
  }
  return g;
}

// --- helpers -------------------------------------------------------------------

template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul_nt lhs");
  require_rank(b, 2, "matmul_nt rhs");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: inner dimensions differ: " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  BasicTensor<T> out({a.dim(0), b.dim(0)});
  as_matrix(out, a.dim(0), b.dim(0)).noalias() =
      as_matrix(a, a.dim(0), a.dim(1)) * as_matrix(b, b.dim(0), b.dim(1)).transpose();
  return out;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ: " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  BasicTensor<T> out({a.dim(0), b.dim(1)});
  as_matrix(out, a.dim(0), b.dim(1)).noalias() =
      as_matrix(a, a.dim(0), a.dim(1)) * as_matrix(b, b.dim(0), b.dim(1));
  return out;
}

template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "matmul_tn lhs");
  require_rank(b, 2, "matmul_tn rhs");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("matmul_tn: inner dimensions differ: " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  BasicTensor<T> out({a.dim(1), b.dim(1)});
  as_matrix(out, a.dim(1), b.dim(1)).noalias() =
      as_matrix(a, a.dim(0), a.dim(1)).transpose() * as_matrix(b, b.dim(0), b.dim(1));
  return out;
}

template <typename T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_shape(b, a.shape(), "hadamard");
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x) {
  require_shape(x, acc.shape(), "add_inplace");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

template <typename T>
BasicTensor<T> concat_columns(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_columns: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_columns input");
    if (p.dim(0) != rows) {
      throw ShapeError("concat_columns: row counts differ (" +
                       std::to_string(rows) + " vs " + std::to_string(p.dim(0)) +
                       ")");
    }
    total += p.dim(1);
  }
  BasicTensor<T> out({rows, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.ptr() + r * w, w, out.ptr() + r * total + offset);
    }
    offset += w;
  }
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> split_columns(const BasicTensor<T>& x,
                                          const std::vector<std::size_t>& widths) {
  require_rank(x, 2, "split_columns input");
  std::size_t total = 0;
  for (auto w : widths) total += w;
  if (total != x.dim(1)) throw ShapeError("split_columns: widths do not sum to columns");
  const std::size_t rows = x.dim(0);
  std::vector<BasicTensor<T>> out;
  std::size_t offset = 0;
  for (auto w : widths) {
    BasicTensor<T> part({rows, w});
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.ptr() + r * total + offset, w, part.ptr() + r * w);
    }
    out.push_back(std::move(part));
    offset += w;
  }
  return out;
}

template <typename T>
T dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
bool all_finite(const BasicTensor<T>& x) {
  return std::all_of(x.data().begin(), x.data().end(),
                     [](T v) { return std::isfinite(v); });
}

#define XVA_INSTANTIATE_OPS(T)                                                   \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                 const BasicTensor<T>&, Conv2dGeometry);         \
  template void conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                const BasicTensor<T>&, Conv2dGeometry,           \
                                BasicTensor<T>*, BasicTensor<T>*,                \
                                BasicTensor<T>*);                                \
  template BasicTensor<T> conv_transpose2d(                                      \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,       \
      ConvTranspose2dGeometry);                                                  \
  template void conv_transpose2d_backward(                                       \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,       \
      ConvTranspose2dGeometry, BasicTensor<T>*, BasicTensor<T>*,                 \
      BasicTensor<T>*);                                                          \
  template BasicTensor<T> conv1d(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                 const BasicTensor<T>&, Conv1dGeometry);         \
  template void conv1d_backward(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                const BasicTensor<T>&, Conv1dGeometry,           \
                                BasicTensor<T>*, BasicTensor<T>*,                \
                                BasicTensor<T>*);                                \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                 const BasicTensor<T>&);                         \
  template void linear_backward(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                const BasicTensor<T>&, BasicTensor<T>*,          \
                                BasicTensor<T>*, BasicTensor<T>*);               \
  template BasicTensor<T> gap2d(const BasicTensor<T>&);                          \
  template BasicTensor<T> gap2d_backward(const Shape&, const BasicTensor<T>&);   \
  template BasicTensor<T> gap1d(const BasicTensor<T>&);                          \
  template BasicTensor<T> gap1d_backward(const Shape&, const BasicTensor<T>&);   \
  template BasicTensor<T> selu(const BasicTensor<T>&);                           \
  template BasicTensor<T> selu_backward(const BasicTensor<T>&,                   \
                                        const BasicTensor<T>&);                  \
  template BasicTensor<T> relu(const BasicTensor<T>&);                           \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&,                   \
                                        const BasicTensor<T>&);                  \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                        \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&,                \
                                           const BasicTensor<T>&);               \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);           \
  template BasicTensor<T> softmax_backward(                                      \
      const BasicTensor<T>&, const BasicTensor<T>&, std::size_t);                \
  template BasicTensor<T> matmul_nt(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> matmul_tn(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> hadamard(const BasicTensor<T>&, const BasicTensor<T>&); \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> concat_columns(const std::vector<BasicTensor<T>>&);    \
  template std::vector<BasicTensor<T>> split_columns(                            \
      const BasicTensor<T>&, const std::vector<std::size_t>&);                   \
  template T dot(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template bool all_finite(const BasicTensor<T>&);

XVA_INSTANTIATE_OPS(float)
XVA_INSTANTIATE_OPS(double)

#undef XVA_INSTANTIATE_OPS

}  // namespace xva::ops
