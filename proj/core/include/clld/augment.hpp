#pragma once

#include <cstddef>
#include <vector>

#include "clld/rng.hpp"
#include "clld/tensor.hpp"

namespace clld {

struct PatchCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  friend auto operator<=>(const PatchCoord&, const PatchCoord&) = default;
};

// Square rho x rho input patches selected for masking. `masked` is kept
// sorted in row-major order with no duplicates.
struct MaskSpec {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t rho = 1;
  std::vector<PatchCoord> masked;

  std::size_t cell_count() const { return grid_h * grid_w; }
  bool contains(std::size_t row, std::size_t col) const;
  // [H,W] indicator of masked pixels.
  std::vector<bool> pixel_mask() const;
};

// Number of cells masked for a ratio: floor(ratio * cells).
std::size_t masked_cell_count(double ratio, std::size_t cells);

// Uniform subset of floor(ratio * cells) grid cells, drawn without
// replacement. Throws ConfigError unless rho divides h and w.
MaskSpec sample_mask(std::size_t h, std::size_t w, std::size_t rho, double ratio, Rng& rng);

// Replaces every pixel of every channel inside a masked patch with a
// fresh N(0,1) draw; all other values are copied unchanged.
template <typename T>
Tensor<T> apply_mask(const Tensor<T>& image, const MaskSpec& spec, Rng& rng);

// Per-channel affine brightness/contrast change; strength 0 is the identity.
template <typename T>
Tensor<T> photometric_jitter(const Tensor<T>& image, double strength, Rng& rng);

// Zero-mean, unit-std per channel. Constant channels map to zero.
template <typename T>
Tensor<T> normalize_per_channel(const Tensor<T>& image);

}  // namespace clld
