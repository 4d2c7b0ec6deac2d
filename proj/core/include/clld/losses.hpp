#pragma once

#include <cstddef>

#include "clld/autograd.hpp"

namespace clld {

inline constexpr double kCosineEps = 1e-8;

// Per-term values of one loss evaluation. l_clld is defined as the sum of
// the three terms.
struct LossBreakdown {
  double l_cons = 0.0;
  double l_sim = 0.0;
  double l_inst = 0.0;
  double l_clld = 0.0;
};

// Disabled terms are not computed at all and report zero.
struct LossSwitches {
  bool use_cons = true;
  bool use_sim = true;
  bool use_inst = true;
};

// Negative mean over pixels of the channel-vector cosine between y and
// y_prime. Range [-1, 1].
template <typename T>
Var<T> consistency_loss(Var<T> y, Var<T> y_prime, T eps = T(kCosineEps));

// Negative cosine between the flattened cross-similarities
// CS(y, patches of y_prime) and CS(y_prime, patches of y). Range [-1, 1].
template <typename T>
Var<T> similarity_loss(Var<T> y, Var<T> y_prime, std::size_t alpha, T eps = T(kCosineEps));

// 2 - 2 cos(pool(y), pool(y_prime)) on globally average-pooled channel
// vectors. Range [0, 4]; an all-zero pooled vector gives 2.
template <typename T>
Var<T> instance_loss(Var<T> y, Var<T> y_prime, T eps = T(kCosineEps));

template <typename T>
struct ClldLoss {
  Var<T> total;
  LossBreakdown breakdown;
};

// Sum of the enabled terms. `y` is the original-view feature map and
// `y_prime` the masked-view one; callers detach whichever branch should
// not receive gradient.
template <typename T>
ClldLoss<T> clld_loss(Var<T> y, Var<T> y_prime, std::size_t alpha, T eps = T(kCosineEps),
                      LossSwitches switches = {});

// Value-only convenience wrapper.
template <typename T>
LossBreakdown clld_loss_value(const Tensor<T>& y, const Tensor<T>& y_prime, std::size_t alpha,
                              T eps = T(kCosineEps), LossSwitches switches = {});

}  // namespace clld
