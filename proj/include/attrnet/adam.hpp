#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "attrnet/parameters.hpp"

namespace attrnet {

/// Adam hyperparameters; defaults are the common framework defaults.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw ValidationError("adam: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("adam: beta1 must be in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("adam: beta2 must be in [0,1)");
    if (!(eps > 0.0)) throw ValidationError("adam: eps must be > 0");
  }

  bool operator==(const AdamConfig&) const = default;
};

/// First/second moment estimates, one pair per parameter in parameter order.
template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update using the gradients stored on `params`.
///
/// All gradients are validated before anything is written, so a shape
/// mismatch or a non-finite gradient leaves params and state untouched.
template <class T>
void adam_step(NamedTensors<T>& params, AdamState<T>& state, const AdamConfig& cfg) {
  cfg.validate();
  if (state.m.empty() && state.t == 0) {
    for (auto& [name, p] : params) {
      state.m.emplace_back(p.numel(), T{0});
      state.v.emplace_back(p.numel(), T{0});
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam state tracks " + std::to_string(state.m.size()) + " tensors, parameters have " +
                         std::to_string(params.size()));
  }
  std::size_t i = 0;
  for (auto& [name, p] : params) {
    if (state.m[i].size() != p.numel() || state.v[i].size() != p.numel()) {
      throw DimensionError("adam state shape mismatch for " + name);
    }
    if (!p.has_grad()) throw ContractError("no gradient for parameter " + name);
    for (T g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + name + "; step aborted");
    }
    ++i;
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  i = 0;
  for (auto& [name, p] : params) {
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const double mhat = static_cast<double>(m[j]) / bc1;
      const double vhat = static_cast<double>(v[j]) / bc2;
      w[j] = static_cast<T>(static_cast<double>(w[j]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
    ++i;
  }
}

}  // namespace attrnet
