#include "xva/adam.hpp"

#include <cmath>

namespace xva {

template <typename T>
void adam_step(Parameter<T>& p, double lr, const AdamConfig& config) {
  p.step_count += 1;
  const double t = static_cast<double>(p.step_count);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T step = static_cast<T>(lr);
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const T g = p.grad[i];
    p.adam_m[i] = b1 * p.adam_m[i] + (T(1) - b1) * g;
    p.adam_v[i] = b2 * p.adam_v[i] + (T(1) - b2) * g * g;
    const T m_hat = p.adam_m[i] / correction1;
    const T v_hat = p.adam_v[i] / correction2;
    p.value[i] -= step * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
void adam_step_all(std::span<Parameter<T>* const> params, double lr,
                   const AdamConfig& config) {
  for (Parameter<T>* p : params) {
    adam_step(*p, lr, config);
    p->zero_grad();
  }
}

template void adam_step(Parameter<float>&, double, const AdamConfig&);
template void adam_step(Parameter<double>&, double, const AdamConfig&);
template void adam_step_all(std::span<Parameter<float>* const>, double,
                            const AdamConfig&);
template void adam_step_all(std::span<Parameter<double>* const>, double,
                            const AdamConfig&);

}  // namespace xva
