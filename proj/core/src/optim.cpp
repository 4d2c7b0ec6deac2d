#include "clld/optim.hpp"

#include <cmath>
#include <numbers>

namespace clld {

double lars_trust_ratio(double weight_norm, double grad_norm, double weight_decay, double eta) {
  const double denom = grad_norm + weight_decay * weight_norm;
  if (weight_norm == 0.0 || denom == 0.0) return 0.0;
  return eta * weight_norm / denom;
}

template <typename T>
void lars_step(ParamSet<T>& params, double lr, const LarsConfig& config) {
  if (lr < 0.0) throw ContractError("lars_step: learning rate must be non-negative");
  for (auto& p : params) {
    if (!p.value.requires_grad() || !p.value.has_grad()) continue;
    auto w = p.value.data();
    auto g = p.value.grad();
    const bool plain = config.exclude_bias_and_norm && p.kind != ParamKind::kWeight;
    double wd = plain ? 0.0 : config.weight_decay;
    double trust = 1.0;
    if (!plain) {
      double wn = 0, gn = 0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        wn += static_cast<double>(w[i]) * static_cast<double>(w[i]);
        gn += static_cast<double>(g[i]) * static_cast<double>(g[i]);
      }
      trust = lars_trust_ratio(std::sqrt(wn), std::sqrt(gn), wd, config.eta);
    }
    const T rate = static_cast<T>(lr * trust);
    const T decay = static_cast<T>(wd);
    if (rate == T(0)) continue;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= rate * (g[i] + decay * w[i]);
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr, std::size_t warmup_steps) {
  if (step > total_steps) throw ContractError("cosine_lr: step exceeds total_steps");
  if (warmup_steps > total_steps) warmup_steps = total_steps;
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps == warmup_steps) return base_lr;
  const double phase = std::numbers::pi * static_cast<double>(step - warmup_steps) /
                       static_cast<double>(total_steps - warmup_steps);
  return base_lr * (std::cos(phase) + 1.0) / 2.0;
}

template <typename T>
Adam<T>::Adam(const ParamSet<T>& params, Options options) : options_(options) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step(ParamSet<T>& params) {
  step(params, options_.lr);
}

template <typename T>
void Adam<T>::step(ParamSet<T>& params, double lr) {
  if (params.size() != m_.size()) throw ContractError("Adam: parameter set changed since construction");
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].value;
    if (!p.requires_grad() || !p.has_grad()) continue;
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m_[k][i] = options_.beta1 * m_[k][i] + (1.0 - options_.beta1) * gi;
      v_[k][i] = options_.beta2 * v_[k][i] + (1.0 - options_.beta2) * gi * gi;
      const double update = lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + options_.eps);
      w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
    }
  }
}

template void lars_step(ParamSet<float>&, double, const LarsConfig&);
template void lars_step(ParamSet<double>&, double, const LarsConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace clld
