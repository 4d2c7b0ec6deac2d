#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "clld/autograd.hpp"
#include "clld/rng.hpp"

namespace clld {

// Desk-scale convolutional backbone: stages of conv -> group norm -> relu,
// followed by a 1x1 projector.
struct EncoderConfig {
  std::size_t input_h = 64;
  std::size_t input_w = 64;
  std::size_t in_channels = 3;
  std::vector<std::size_t> stage_channels{16, 32, 64};
  std::vector<std::size_t> stage_strides{2, 2, 2};
  std::size_t kernel = 3;
  std::size_t group_size = 8;
  // 0 keeps the last stage's channels (identity projector).
  std::size_t projector_dim = 32;
  int precision = 32;

  std::size_t total_stride() const;
  std::size_t output_h() const { return input_h / total_stride(); }
  std::size_t output_w() const { return input_w / total_stride(); }
  std::size_t output_channels() const;

  // Throws ConfigError when strides do not divide the input, the lists
  // disagree, or some alpha does not fit the output map.
  void validate(const std::vector<std::size_t>& alphas = {}) const;
};

enum class ParamKind { kWeight, kBias, kNorm };

template <typename T>
struct NamedParam {
  std::string name;
  ParamKind kind = ParamKind::kWeight;
  Tensor<T> value;
};

// Ordered, named parameter tensors.
template <typename T>
class ParamSet {
 public:
  void add(std::string name, ParamKind kind, Tensor<T> value);

  std::size_t size() const { return params_.size(); }
  NamedParam<T>& operator[](std::size_t i) { return params_[i]; }
  const NamedParam<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Throws ConfigError when `name` is missing.
  Tensor<T>& get(const std::string& name);
  const Tensor<T>& get(const std::string& name) const;

  void set_requires_grad(bool on);
  void zero_grad();
  std::size_t element_count() const;
  // L2 norm of all gradient buffers together.
  double grad_norm() const;

 private:
  std::vector<NamedParam<T>> params_;
};

// Throws ContractError unless both sets agree name-by-name and shape-by-shape.
template <typename T>
void require_matching_params(const ParamSet<T>& a, const ParamSet<T>& b);

template <typename T>
ParamSet<T> init_encoder_params(const EncoderConfig& config, Rng& rng);

// Records the forward pass on `g`. Parameters are bound as leaves, so
// those with requires_grad receive gradients on backward().
template <typename T>
Var<T> encoder_forward(Graph<T>& g, ParamSet<T>& params, Var<T> image, const EncoderConfig& config);

// Forward pass without gradient tracking. Returns the [d,h,w] feature map.
template <typename T>
Tensor<T> encoder_forward(const ParamSet<T>& params, const Tensor<T>& image, const EncoderConfig& config);

// Online (gradient-updated) and target (moving-average) parameter sets.
template <typename T>
struct EncoderPair {
  ParamSet<T> online;
  ParamSet<T> target;
  double momentum = 0.99;
};

// Target starts as an exact copy of the online parameters.
template <typename T>
EncoderPair<T> make_encoder_pair(const EncoderConfig& config, Rng& rng);

// target <- m * target + (1 - m) * online, evaluated as
// target + (1 - m) * (online - target) so that equal sets stay fixed.
template <typename T>
void momentum_update(EncoderPair<T>& pair, double m);

// 1 - (1 - m0) * (cos(pi * step / total) + 1) / 2; returns 1 when total is 0.
double momentum_schedule(std::size_t step, std::size_t total_steps, double m0);

}  // namespace clld
