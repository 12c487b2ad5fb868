#pragma once

#include <cmath>
#include <cstdint>

#include "weaktag/error.hpp"
#include "weaktag/params.hpp"

namespace weaktag {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct BasicAdamState {
  BasicParamSet<T> first_moment;
  BasicParamSet<T> second_moment;
  std::uint64_t step = 0;

  static BasicAdamState for_params(const BasicParamSet<T>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

using AdamState = BasicAdamState<float>;

/// One bias-corrected Adam update. Throws before touching anything if a
/// gradient is non-finite, so a failed step leaves params and state intact.
template <class T>
void adam_step(BasicParamSet<T>& params, const BasicParamSet<T>& grads, BasicAdamState<T>& state,
               const AdamConfig& cfg) {
  require(cfg.learning_rate > 0, Errc::invalid_argument, "learning rate must be positive");
  require(params.same_layout(grads), Errc::shape_mismatch, "gradients do not match parameters");
  if (state.first_moment.size() == 0 && state.step == 0) state = BasicAdamState<T>::for_params(params);
  require(params.same_layout(state.first_moment) && params.same_layout(state.second_moment),
          Errc::shape_mismatch, "optimizer state does not match parameters");
  for (const auto& g : grads)
    if (!g.value.all_finite()) fail(Errc::non_finite, "gradient of " + g.name);

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].value.data();
    auto g = grads[i].value.data();
    auto m = state.first_moment[i].value.data();
    auto v = state.second_moment[i].value.data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      theta[j] = static_cast<T>(static_cast<double>(theta[j]) -
                                cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

}  // namespace weaktag
