#include "xva/layers.hpp"

#include <cmath>

namespace xva {

template <typename T>
void init_fan_in(Parameter<T>& p, double fan_in, double gain, Rng& rng) {
  const double std = gain / std::sqrt(std::max(fan_in, 1.0));
  for (auto& v : p.value.data()) v = static_cast<T>(std * rng.gaussian());
  p.zero_grad();
  p.reset_optimizer();
}

namespace {
template <typename T>
void zero_param(Parameter<T>& p) {
  p.value.fill(T(0));
  p.zero_grad();
  p.reset_optimizer();
}
}  // namespace

// --- Conv2d --------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t padding, std::size_t stride)
    : weight({out_channels, in_channels, kernel, kernel}),
      bias({out_channels}),
      geom_{stride, padding} {}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& x) const {
  return ops::conv2d(x, weight.value, bias.value, geom_);
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const BasicTensor<T>& x,
                                   const BasicTensor<T>& gy) {
  BasicTensor<T> gx;
  ops::conv2d_backward(x, weight.value, gy, geom_, &gx, &weight.grad, &bias.grad);
  return gx;
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward_input(const BasicTensor<T>& x,
                                         const BasicTensor<T>& gy) const {
  BasicTensor<T> gx;
  ops::conv2d_backward<T>(x, weight.value, gy, geom_, &gx, nullptr, nullptr);
  return gx;
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  if (in.size() != 3 || in[0] != in_channels()) {
    throw ShapeError("conv2d: input " + shape_string(in) + " incompatible with " +
                     std::to_string(in_channels()) + " input channels");
  }
  return {out_channels(),
          ops::conv_output_extent(in[1], kernel(), geom_.padding, geom_.stride),
          ops::conv_output_extent(in[2], kernel(), geom_.padding, geom_.stride)};
}

template <typename T>
void Conv2d<T>::init(Rng& rng, double gain) {
  init_fan_in(weight, static_cast<double>(in_channels() * kernel() * kernel()),
              gain, rng);
  zero_param(bias);
}

template <typename T>
std::vector<std::uint32_t> Conv2d<T>::geometry() const {
  return {static_cast<std::uint32_t>(in_channels()),
          static_cast<std::uint32_t>(out_channels()),
          static_cast<std::uint32_t>(kernel()),
          static_cast<std::uint32_t>(geom_.padding),
          static_cast<std::uint32_t>(geom_.stride)};
}

// --- ConvTranspose2d -------------------------------------------------------------

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::size_t in_channels,
                                    std::size_t out_channels, std::size_t kernel,
                                    ops::ConvTranspose2dGeometry geometry)
    : weight({in_channels, out_channels, kernel, kernel}),
      bias({out_channels}),
      geom_(geometry) {}

template <typename T>
BasicTensor<T> ConvTranspose2d<T>::forward(const BasicTensor<T>& x) const {
  return ops::conv_transpose2d(x, weight.value, bias.value, geom_);
}

template <typename T>
BasicTensor<T> ConvTranspose2d<T>::backward(const BasicTensor<T>& x,
                                            const BasicTensor<T>& gy) {
  BasicTensor<T> gx;
  ops::conv_transpose2d_backward(x, weight.value, gy, geom_, &gx, &weight.grad,
                                 &bias.grad);
  return gx;
}

template <typename T>
BasicTensor<T> ConvTranspose2d<T>::backward_input(const BasicTensor<T>& x,
                                                  const BasicTensor<T>& gy) const {
  BasicTensor<T> gx;
  ops::conv_transpose2d_backward<T>(x, weight.value, gy, geom_, &gx, nullptr,
                                    nullptr);
  return gx;
}

template <typename T>
Shape ConvTranspose2d<T>::output_shape(const Shape& in) const {
  if (in.size() != 3 || in[0] != in_channels()) {
    throw ShapeError("conv_transpose2d: input " + shape_string(in) +
                     " incompatible with " + std::to_string(in_channels()) +
                     " input channels");
  }
  const std::size_t k = weight.value.dim(2);
  return {out_channels(),
          ops::conv_transpose_output_extent(in[1], k, geom_.padding, geom_.stride,
                                            geom_.output_padding_h),
          ops::conv_transpose_output_extent(in[2], k, geom_.padding, geom_.stride,
                                            geom_.output_padding_w)};
}

template <typename T>
void ConvTranspose2d<T>::init(Rng& rng, double gain) {
  // Each output site receives about in_channels * k^2 / stride^2 terms.
  const double k = static_cast<double>(weight.value.dim(2));
  const double s = static_cast<double>(geom_.stride);
  init_fan_in(weight, static_cast<double>(in_channels()) * k * k / (s * s), gain,
              rng);
  zero_param(bias);
}

template <typename T>
std::vector<std::uint32_t> ConvTranspose2d<T>::geometry() const {
  return {static_cast<std::uint32_t>(in_channels()),
          static_cast<std::uint32_t>(out_channels()),
          static_cast<std::uint32_t>(weight.value.dim(2)),
          static_cast<std::uint32_t>(geom_.padding),
          static_cast<std::uint32_t>(geom_.stride),
          static_cast<std::uint32_t>(geom_.output_padding_h),
          static_cast<std::uint32_t>(geom_.output_padding_w)};
}

// --- Conv1d --------------------------------------------------------------------

template <typename T>
Conv1d<T>::Conv1d(std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t padding, std::size_t stride)
    : weight({out_channels, in_channels, kernel}),
      bias({out_channels}),
      geom_{stride, padding} {}

template <typename T>
BasicTensor<T> Conv1d<T>::forward(const BasicTensor<T>& x) const {
  return ops::conv1d(x, weight.value, bias.value, geom_);
}

template <typename T>
BasicTensor<T> Conv1d<T>::backward(const BasicTensor<T>& x,
                                   const BasicTensor<T>& gy) {
  BasicTensor<T> gx;
  ops::conv1d_backward(x, weight.value, gy, geom_, &gx, &weight.grad, &bias.grad);
  return gx;
}

template <typename T>
BasicTensor<T> Conv1d<T>::backward_input(const BasicTensor<T>& x,
                                         const BasicTensor<T>& gy) const {
  BasicTensor<T> gx;
  ops::conv1d_backward<T>(x, weight.value, gy, geom_, &gx, nullptr, nullptr);
  return gx;
}

template <typename T>
void Conv1d<T>::init(Rng& rng, double gain) {
  init_fan_in(weight,
              static_cast<double>(in_channels() * weight.value.dim(2)), gain, rng);
  zero_param(bias);
}

template <typename T>
std::vector<std::uint32_t> Conv1d<T>::geometry() const {
  return {static_cast<std::uint32_t>(in_channels()),
          static_cast<std::uint32_t>(out_channels()),
          static_cast<std::uint32_t>(weight.value.dim(2)),
          static_cast<std::uint32_t>(geom_.padding),
          static_cast<std::uint32_t>(geom_.stride)};
}

// --- Linear --------------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features)
    : weight({out_features, in_features}), bias({out_features}) {}

template <typename T>
BasicTensor<T> Linear<T>::forward(const BasicTensor<T>& x) const {
  return ops::linear(x, weight.value, bias.value);
}

template <typename T>
BasicTensor<T> Linear<T>::backward(const BasicTensor<T>& x,
                                   const BasicTensor<T>& gy) {
  BasicTensor<T> gx;
  ops::linear_backward(x, weight.value, gy, &gx, &weight.grad, &bias.grad);
  return gx;
}

template <typename T>
BasicTensor<T> Linear<T>::backward_input(const BasicTensor<T>& x,
                                         const BasicTensor<T>& gy) const {
  BasicTensor<T> gx;
  ops::linear_backward<T>(x, weight.value, gy, &gx, nullptr, nullptr);
  return gx;
}

template <typename T>
void Linear<T>::init(Rng& rng, double gain) {
  init_fan_in(weight, static_cast<double>(in_features()), gain, rng);
  zero_param(bias);
}

template <typename T>
std::vector<std::uint32_t> Linear<T>::geometry() const {
  return {static_cast<std::uint32_t>(in_features()),
          static_cast<std::uint32_t>(out_features())};
}

template void init_fan_in(Parameter<float>&, double, double, Rng&);
template void init_fan_in(Parameter<double>&, double, double, Rng&);
template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class Conv1d<float>;
template class Conv1d<double>;
template class Linear<float>;
template class Linear<double>;

}  // namespace xva
