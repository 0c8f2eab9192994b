#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mmqa/autodiff.hpp"
#include "mmqa/error.hpp"
#include "mmqa/tensor.hpp"

namespace mmqa {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments shaped like the parameters, plus the step count.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const Parameters& params) {
    AdamState s;
    for (const Tensor& p : params.values()) {
      s.m.emplace_back(p.rows(), p.cols());
      s.v.emplace_back(p.rows(), p.cols());
    }
    return s;
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update. Frozen parameters are left untouched.
inline void adam_step(Parameters& params, std::span<const Tensor> grads, AdamState& state,
                      const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment counts disagree");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!grads[p].same_shape(params.value(p)) || !state.m[p].same_shape(params.value(p)) ||
        !state.v[p].same_shape(params.value(p))) {
      throw ShapeError("adam_step: shape mismatch for parameter '" + params.name(p) + "' " +
                       params.value(p).shape_string() + " vs gradient " + grads[p].shape_string());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(config.beta1, t);
  const double correct2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params.trainable(p)) continue;
    Tensor& value = params.value(p);
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    const Tensor& g = grads[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      value[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace mmqa
