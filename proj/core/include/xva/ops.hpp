#pragma once

// Stateless forward/backward kernels. Every layer and model in the library
// is composed from these. Backward functions write the input gradient to
// `grad_input` (overwriting) and *accumulate* into `grad_weight` /
// `grad_bias`; any of the three may be null to skip that term.

#include <cstddef>

#include "xva/tensor.hpp"

namespace xva::ops {

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct ConvTranspose2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding_h = 0;
  std::size_t output_padding_w = 0;
};

struct Conv1dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// floor((in + 2p - k) / s) + 1, or ShapeError when the kernel does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t padding, std::size_t stride);

/// s (in - 1) + k - 2p + output_padding.
std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel,
                                         std::size_t padding,
                                         std::size_t stride,
                                         std::size_t output_padding);

// --- 2D convolution: input C_in x H x W, weight C_out x C_in x k x k -------

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, Conv2dGeometry geometry);

template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_output, Conv2dGeometry geometry,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_weight,
                     BasicTensor<T>* grad_bias);

// --- Transposed 2D convolution ---------------------------------------------
// weight is C_in x C_out x k x k, i.e. the weight of the conv2d it is the
// adjoint of. With zero bias:
//   <conv2d(x, w), y> == <x, conv_transpose2d(y, w)>
// whenever conv2d maps the transposed output extent back to y's extent.

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& input,
                                const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias,
                                ConvTranspose2dGeometry geometry);

template <typename T>
void conv_transpose2d_backward(const BasicTensor<T>& input,
                               const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_output,
                               ConvTranspose2dGeometry geometry,
                               BasicTensor<T>* grad_input,
                               BasicTensor<T>* grad_weight,
                               BasicTensor<T>* grad_bias);

// --- 1D temporal convolution: input T x C_in, weight C_out x C_in x k ------

template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, Conv1dGeometry geometry);

template <typename T>
void conv1d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_output, Conv1dGeometry geometry,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_weight,
                     BasicTensor<T>* grad_bias);

// --- Affine map on a vector: y = W x + b, W is out x in --------------------

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

template <typename T>
void linear_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& grad_output,
                     BasicTensor<T>* grad_input, BasicTensor<T>* grad_weight,
                     BasicTensor<T>* grad_bias);

// --- Global average pooling ------------------------------------------------

/// C x H x W -> C
template <typename T>
BasicTensor<T> gap2d(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> gap2d_backward(const Shape& input_shape,
                              const BasicTensor<T>& grad_output);

/// T x C -> C
template <typename T>
BasicTensor<T> gap1d(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> gap1d_backward(const Shape& input_shape,
                              const BasicTensor<T>& grad_output);

// --- Activations -----------------------------------------------------------

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

template <typename T>
BasicTensor<T> selu(const BasicTensor<T>& x);
/// Needs the pre-activation input.
template <typename T>
BasicTensor<T> selu_backward(const BasicTensor<T>& x,
                             const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x,
                             const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
/// Needs the activation output.
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& grad_output);

/// Numerically stable softmax along `axis` of a tensor of any rank.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);
/// Needs the softmax output.
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y,
                                const BasicTensor<T>& grad_output,
                                std::size_t axis);

// --- Small helpers used by the models --------------------------------------

/// a * b^T for row-major matrices: (n x c) * (m x c)^T -> n x m.
template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// a * b: (n x m) * (m x c) -> n x c.
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// a^T * b: (m x n)^T * (m x c) -> n x c.
template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
void add_inplace(BasicTensor<T>& acc, const BasicTensor<T>& x);

/// Concatenate rank-2 tensors with equal row counts along columns.
template <typename T>
BasicTensor<T> concat_columns(const std::vector<BasicTensor<T>>& parts);

/// Split columns back into pieces of the given widths.
template <typename T>
std::vector<BasicTensor<T>> split_columns(const BasicTensor<T>& x,
                                          const std::vector<std::size_t>& widths);

template <typename T>
T dot(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
bool all_finite(const BasicTensor<T>& x);

}  // namespace xva::ops
