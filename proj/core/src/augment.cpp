#include "clld/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace clld {

bool MaskSpec::contains(std::size_t row, std::size_t col) const {
  return std::binary_search(masked.begin(), masked.end(), PatchCoord{row, col});
}

std::vector<bool> MaskSpec::pixel_mask() const {
  const std::size_t W = grid_w * rho;
  std::vector<bool> out(grid_h * rho * W, false);
  for (const auto& p : masked) {
    for (std::size_t y = p.row * rho; y < (p.row + 1) * rho; ++y) {
      for (std::size_t x = p.col * rho; x < (p.col + 1) * rho; ++x) out[y * W + x] = true;
    }
  }
  return out;
}

std::size_t masked_cell_count(double ratio, std::size_t cells) {
  // The small slack absorbs representation error such as 0.29 * 100.
  const double n = std::floor(ratio * static_cast<double>(cells) + 1e-9);
  return std::min(cells, static_cast<std::size_t>(std::max(0.0, n)));
}

MaskSpec sample_mask(std::size_t h, std::size_t w, std::size_t rho, double ratio, Rng& rng) {
  if (rho == 0 || h % rho != 0 || w % rho != 0) {
    throw ConfigError("sample_mask: patch side " + std::to_string(rho) + " must divide image size " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("sample_mask: ratio must lie in [0,1]");
  MaskSpec spec;
  spec.grid_h = h / rho;
  spec.grid_w = w / rho;
  spec.rho = rho;
  const std::size_t cells = spec.cell_count();
  const std::size_t count = masked_cell_count(ratio, cells);

  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(cells - i));
    std::swap(order[i], order[j]);
  }
  order.resize(count);
  std::sort(order.begin(), order.end());
  spec.masked.reserve(count);
  for (auto idx : order) spec.masked.push_back({idx / spec.grid_w, idx % spec.grid_w});
  return spec;
}

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& image, const MaskSpec& spec, Rng& rng) {
  require_rank(image.shape(), 3, "apply_mask image");
  if (image.dim(1) != spec.grid_h * spec.rho) {
    throw DimensionError("apply_mask: axis 1 (height) " + std::to_string(image.dim(1)) + " does not match mask grid");
  }
  if (image.dim(2) != spec.grid_w * spec.rho) {
    throw DimensionError("apply_mask: axis 2 (width) " + std::to_string(image.dim(2)) + " does not match mask grid");
  }
  Tensor<T> out(image.shape(), std::vector<T>(image.data().begin(), image.data().end()));
  const std::size_t C = image.dim(0);
  for (const auto& p : spec.masked) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = p.row * spec.rho; y < (p.row + 1) * spec.rho; ++y) {
        for (std::size_t x = p.col * spec.rho; x < (p.col + 1) * spec.rho; ++x) {
          out.at(c, y, x) = static_cast<T>(rng.normal());
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> photometric_jitter(const Tensor<T>& image, double strength, Rng& rng) {
  require_rank(image.shape(), 3, "photometric_jitter image");
  if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("photometric_jitter: strength must lie in [0,1]");
  Tensor<T> out(image.shape(), std::vector<T>(image.data().begin(), image.data().end()));
  const std::size_t C = image.dim(0), HW = image.dim(1) * image.dim(2);
  for (std::size_t c = 0; c < C; ++c) {
    const T contrast = static_cast<T>(1.0 + strength * rng.uniform(-0.4, 0.4));
    const T brightness = static_cast<T>(strength * rng.uniform(-0.4, 0.4));
    for (std::size_t i = 0; i < HW; ++i) out[c * HW + i] = contrast * out[c * HW + i] + brightness;
  }
  return out;
}

template <typename T>
Tensor<T> normalize_per_channel(const Tensor<T>& image) {
  require_rank(image.shape(), 3, "normalize_per_channel image");
  Tensor<T> out(image.shape());
  const std::size_t C = image.dim(0), HW = image.dim(1) * image.dim(2);
  for (std::size_t c = 0; c < C; ++c) {
    double m = 0;
    for (std::size_t i = 0; i < HW; ++i) m += image[c * HW + i];
    m /= static_cast<double>(HW);
    double var = 0;
    for (std::size_t i = 0; i < HW; ++i) {
      const double d = image[c * HW + i] - m;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(HW));
    const double inv = sd > 1e-12 ? 1.0 / sd : 0.0;
    for (std::size_t i = 0; i < HW; ++i) out[c * HW + i] = static_cast<T>((image[c * HW + i] - m) * inv);
  }
  return out;
}

template Tensor<float> apply_mask(const Tensor<float>&, const MaskSpec&, Rng&);
template Tensor<double> apply_mask(const Tensor<double>&, const MaskSpec&, Rng&);
template Tensor<float> photometric_jitter(const Tensor<float>&, double, Rng&);
template Tensor<double> photometric_jitter(const Tensor<double>&, double, Rng&);
template Tensor<float> normalize_per_channel(const Tensor<float>&);
template Tensor<double> normalize_per_channel(const Tensor<double>&);

}  // namespace clld
