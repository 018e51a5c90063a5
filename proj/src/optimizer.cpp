#include "celif/optimizer.hpp"

#include <cmath>

#include "celif/error.hpp"

namespace celif {

void adam_step(std::span<const ParamRef> params, AdamState& state) {
  for (const auto& p : params) {
    if (p.value->shape() != p.grad->shape())
      throw DimensionError("adam_step: gradient shape " + shape_string(p.grad->shape()) +
                           " does not match parameter '" + p.name + "' " + shape_string(p.value->shape()));
    if (!p.grad->all_finite()) throw TrainingError("adam_step: non-finite gradient for parameter '" + p.name + "'");
  }

  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value->shape());
      state.second_moment.emplace_back(p.value->shape());
    }
  }
  if (state.first_moment.size() != params.size())
    throw DimensionError("adam_step: optimizer tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));

  const auto& cfg = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.shape() != params[i].value->shape())
      throw DimensionError("adam_step: moment shape mismatch for '" + params[i].name + "'");
    auto value = params[i].value->data();
    auto grad = params[i].grad->data();
    auto md = m.data();
    auto vd = v.data();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      md[k] = cfg.beta1 * md[k] + (1.0 - cfg.beta1) * g;
      vd[k] = cfg.beta2 * vd[k] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = md[k] / correction1;
      const double v_hat = vd[k] / correction2;
      value[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

double clip_grad_norm(std::span<Tensor* const> grads, double max_norm) {
  double sq = 0;
  for (const auto* g : grads)
    for (double x : g->data()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* g : grads)
      for (auto& x : g->data()) x *= scale;
  }
  return norm;
}

}  // namespace celif
