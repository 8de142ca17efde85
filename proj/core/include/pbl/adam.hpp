#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace pbl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW-style) when non-zero
};

/// One bias-corrected Adam step at 1-based `step`. Arithmetic is carried out in
/// double and rounded back to T.
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 std::int64_t step, const AdamConfig& cfg) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw std::invalid_argument("adam_update: span sizes differ");
  }
  if (step < 1) throw std::invalid_argument("adam_update: step is 1-based");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    double p = static_cast<double>(params[i]);
    if (cfg.weight_decay != 0.0) p -= cfg.learning_rate * cfg.weight_decay * p;
    p -= cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon);
    params[i] = static_cast<T>(p);
  }
}

}  // namespace pbl
