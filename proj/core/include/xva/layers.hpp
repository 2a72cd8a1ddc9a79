#pragma once

#include <cstdint>
#include <vector>

#include "xva/ops.hpp"
#include "xva/rng.hpp"
#include "xva/tensor.hpp"

namespace xva {

/// A trainable tensor plus its gradient and Adam moments.
template <typename T>
struct Parameter {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> adam_m;
  BasicTensor<T> adam_v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  explicit Parameter(const Shape& shape)
      : value(shape), grad(shape), adam_m(shape), adam_v(shape) {}

  void zero_grad() { grad.fill(T(0)); }

  /// Drop optimizer history (used when a model is re-initialized).
  void reset_optimizer() {
    adam_m.fill(T(0));
    adam_v.fill(T(0));
    step_count = 0;
  }
};

/// Layer tags used by the checkpoint format.
enum class LayerKind : std::uint8_t {
  kConv2d = 1,
  kConvTranspose2d = 2,
  kConv1d = 3,
  kLinear = 4,
  kSqueezeExcite = 5,
};

/// Fill `p` with N(0, gain^2 / fan_in) and zero its optimizer state.
template <typename T>
void init_fan_in(Parameter<T>& p, double fan_in, double gain, Rng& rng);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t padding, std::size_t stride);

  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& gy);
  BasicTensor<T> backward_input(const BasicTensor<T>& x,
                                const BasicTensor<T>& gy) const;
  Shape output_shape(const Shape& input_shape) const;

  void init(Rng& rng, double gain);
  std::vector<Parameter<T>*> parameters() { return {&weight, &bias}; }
  std::vector<const Parameter<T>*> parameters() const { return {&weight, &bias}; }
  std::vector<std::uint32_t> geometry() const;

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }
  std::size_t kernel() const { return weight.value.dim(2); }
  ops::Conv2dGeometry geom() const { return geom_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  ops::Conv2dGeometry geom_;
};

/// Transposed convolution; weight is in_channels x out_channels x k x k.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, ops::ConvTranspose2dGeometry geometry);

  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& gy);
  BasicTensor<T> backward_input(const BasicTensor<T>& x,
                                const BasicTensor<T>& gy) const;
  Shape output_shape(const Shape& input_shape) const;

  void init(Rng& rng, double gain);
  std::vector<Parameter<T>*> parameters() { return {&weight, &bias}; }
  std::vector<const Parameter<T>*> parameters() const { return {&weight, &bias}; }
  std::vector<std::uint32_t> geometry() const;

  std::size_t in_channels() const { return weight.value.dim(0); }
  std::size_t out_channels() const { return weight.value.dim(1); }
  ops::ConvTranspose2dGeometry geom() const { return geom_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  ops::ConvTranspose2dGeometry geom_;
};

template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t padding, std::size_t stride = 1);

  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& gy);
  BasicTensor<T> backward_input(const BasicTensor<T>& x,
                                const BasicTensor<T>& gy) const;

  void init(Rng& rng, double gain);
  std::vector<Parameter<T>*> parameters() { return {&weight, &bias}; }
  std::vector<const Parameter<T>*> parameters() const { return {&weight, &bias}; }
  std::vector<std::uint32_t> geometry() const;

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }
  ops::Conv1dGeometry geom() const { return geom_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  ops::Conv1dGeometry geom_;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features);

  BasicTensor<T> forward(const BasicTensor<T>& x) const;
  BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& gy);
  BasicTensor<T> backward_input(const BasicTensor<T>& x,
                                const BasicTensor<T>& gy) const;

  void init(Rng& rng, double gain);
  std::vector<Parameter<T>*> parameters() { return {&weight, &bias}; }
  std::vector<const Parameter<T>*> parameters() const { return {&weight, &bias}; }
  std::vector<std::uint32_t> geometry() const;

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  Parameter<T> weight;
  Parameter<T> bias;
};

/// Gains for init_fan_in: LeCun-normal for SELU stacks, He-normal for ReLU.
inline constexpr double kSeluGain = 1.0;
inline constexpr double kReluGain = 1.4142135623730951;

}  // namespace xva
