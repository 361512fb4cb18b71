#include "hgr/optim.hpp"

#include <algorithm>
#include <cmath>

#include "hgr/error.hpp"

namespace hgr {

void adamw_update(Tensor& theta, const Tensor& grad, Tensor& m, Tensor& v, std::size_t step, double lr,
                  const AdamWSettings& s) {
  if (grad.shape != theta.shape || m.shape != theta.shape || v.shape != theta.shape) {
    throw ShapeError("adamw: parameter " + shape_string(theta.shape) + " vs gradient " + shape_string(grad.shape));
  }
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * s.weight_decay;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad.values[i];
    m.values[i] = s.beta1 * m.values[i] + (1.0 - s.beta1) * g;
    v.values[i] = s.beta2 * v.values[i] + (1.0 - s.beta2) * g * g;
    const double mh = m.values[i] / c1;
    const double vh = v.values[i] / c2;
    theta.values[i] = theta.values[i] * decay - lr * mh / (std::sqrt(vh) + s.eps);
  }
}

void adamw_step(ParamStore& params, AdamWState& state, double lr, const AdamWSettings& settings) {
  if (state.m.empty()) {
    for (const Parameter& p : params) {
      state.m.emplace_back(p.value.shape, 0.0);
      state.v.emplace_back(p.value.shape, 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("optimizer state does not match the parameter store");
  ++state.step;
  std::size_t i = 0;
  for (Parameter& p : params) {
    if (p.grad.values.empty()) p.grad = Tensor(p.value.shape, 0.0);
    adamw_update(p.value, p.grad, state.m[i], state.v[i], state.step, lr, settings);
    ++i;
  }
}

double plateau_step(PlateauState& s, double metric) {
  if (!std::isfinite(metric)) throw NumericError("plateau scheduler got a non-finite metric");
  if (!s.has_best || metric > s.best) {
    s.best = metric;
    s.has_best = true;
    s.stale = 0;
    return s.lr;
  }
  if (++s.stale >= s.patience) {
    s.lr = std::max(s.lr * s.factor, s.lr_min);
    s.stale = 0;
  }
  return s.lr;
}

}  // namespace hgr
