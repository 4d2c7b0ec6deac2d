#pragma once

#include <cstddef>
#include <vector>

#include "clld/encoder.hpp"

namespace clld {

struct LarsConfig {
  double weight_decay = 1e-5;
  double eta = 1e-3;
  // Bias and normalization parameters take plain SGD steps (trust 1, no decay).
  bool exclude_bias_and_norm = true;
};

// Layer-wise trust ratio for one tensor:
// eta * |w| / (|g| + wd * |w|), or 0 when |w| or the denominator is 0.
double lars_trust_ratio(double weight_norm, double grad_norm, double weight_decay, double eta);

// w <- w - lr * trust * (g + wd * w) for every parameter with a gradient.
template <typename T>
void lars_step(ParamSet<T>& params, double lr, const LarsConfig& config);

// Linear warmup to base_lr over warmup_steps, then half-cosine decay to 0
// at total_steps.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr, std::size_t warmup_steps);

// Default warmup: 5% of the run.
inline std::size_t default_warmup(std::size_t total_steps) { return total_steps / 20; }

// Adam, used for downstream fine-tuning.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(const ParamSet<T>& params, Options options);

  void step(ParamSet<T>& params);
  void step(ParamSet<T>& params, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  Options options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

}  // namespace clld
