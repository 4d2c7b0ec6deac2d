#pragma once

#include <cstddef>
#include <vector>

#include "clld/autograd.hpp"
#include "clld/tensor.hpp"

namespace clld {

// Concatenated per-patch similarity maps.
//
// values has shape [z, h/alpha, w/alpha] with z = (h/alpha)*(w/alpha).
// Slice k belongs to patch k of the second operand (row-major), and
// values[k][i][j] is its inner product with patch (i,j) of the first
// operand, summed over the alpha x alpha window and all channels.
template <typename T>
struct CrossSimTensor {
  Tensor<T> values;
  std::size_t alpha = 1;
  Shape source_shape;

  std::size_t patch_count() const { return values.dim(0); }
  // Entry (k, m) of the z x z matrix view.
  T entry(std::size_t k, std::size_t m) const { return values[k * patch_count() + m]; }
};

// Throws ConfigError unless alpha divides both spatial extents.
void check_patch_side(const Shape& feature_shape, std::size_t alpha);

// Non-overlapping alpha x alpha tiles of y[c,h,w] in row-major order.
template <typename T>
std::vector<Tensor<T>> patchify(const Tensor<T>& y, std::size_t alpha);

// Inverse of patchify.
template <typename T>
Tensor<T> unpatchify(const std::vector<Tensor<T>>& patches, std::size_t h, std::size_t w);

// Cross-similarity of y against every patch of y_prime (Gram-matrix path).
template <typename T>
CrossSimTensor<T> cross_similarity(const Tensor<T>& y, const Tensor<T>& y_prime, std::size_t alpha);

// Differentiable form; the result node has shape [z, h/alpha, w/alpha].
template <typename T>
Var<T> cross_similarity(Var<T> y, Var<T> y_prime, std::size_t alpha);

// Direct loop transcription, kept independent of the fast path for use as
// a test oracle.
template <typename T>
CrossSimTensor<T> cross_similarity_naive(const Tensor<T>& y, const Tensor<T>& y_prime, std::size_t alpha);

}  // namespace clld
