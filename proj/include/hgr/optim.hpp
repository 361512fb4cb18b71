#pragma once

#include <cstddef>
#include <vector>

#include "hgr/autodiff.hpp"

namespace hgr {

struct AdamWSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

// theta <- theta * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps), using
// each parameter's accumulated grad.
void adamw_step(ParamStore& params, AdamWState& state, double lr, const AdamWSettings& settings);

// Scalar-tensor form used by tests and by adamw_step.
void adamw_update(Tensor& theta, const Tensor& grad, Tensor& m, Tensor& v, std::size_t step, double lr,
                  const AdamWSettings& settings);

// Reduce-on-plateau for a metric where larger is better.
struct PlateauState {
  double lr = 0.0;
  double lr_min = 0.0;
  double factor = 0.5;
  std::size_t patience = 5;
  double best = 0.0;
  bool has_best = false;
  std::size_t stale = 0;
};

double plateau_step(PlateauState& state, double metric);

}  // namespace hgr
