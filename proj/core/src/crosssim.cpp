#include "clld/crosssim.hpp"

#include <string>

#include "gemm.hpp"

namespace clld {
namespace {

struct PatchGrid {
  std::size_t c, h, w, alpha, gh, gw;
  std::size_t patches() const { return gh * gw; }
  std::size_t patch_len() const { return c * alpha * alpha; }
};

PatchGrid grid_for(const Shape& s, std::size_t alpha) {
  check_patch_side(s, alpha);
  return {s[0], s[1], s[2], alpha, s[1] / alpha, s[2] / alpha};
}

// Row p holds patch p flattened as (channel, u, v).
template <typename T>
std::vector<T> patch_matrix(const PatchGrid& g, std::span<const T> y) {
  std::vector<T> out(g.patches() * g.patch_len());
  std::size_t idx = 0;
  for (std::size_t pr = 0; pr < g.gh; ++pr) {
    for (std::size_t pc = 0; pc < g.gw; ++pc) {
      for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t u = 0; u < g.alpha; ++u) {
          const T* row = y.data() + (c * g.h + pr * g.alpha + u) * g.w + pc * g.alpha;
          for (std::size_t v = 0; v < g.alpha; ++v) out[idx++] = row[v];
        }
      }
    }
  }
  return out;
}

template <typename T>
void scatter_patch_matrix(const PatchGrid& g, const std::vector<T>& m, std::span<T> y) {
  std::size_t idx = 0;
  for (std::size_t pr = 0; pr < g.gh; ++pr) {
    for (std::size_t pc = 0; pc < g.gw; ++pc) {
      for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t u = 0; u < g.alpha; ++u) {
          T* row = y.data() + (c * g.h + pr * g.alpha + u) * g.w + pc * g.alpha;
          for (std::size_t v = 0; v < g.alpha; ++v) row[v] += m[idx++];
        }
      }
    }
  }
}

template <typename T>
Tensor<T> gram_forward(const PatchGrid& g, const Tensor<T>& y, const Tensor<T>& y_prime) {
  const auto py = patch_matrix<T>(g, y.data());
  const auto pyp = patch_matrix<T>(g, y_prime.data());
  const std::size_t z = g.patches();
  Tensor<T> out(Shape{z, g.gh, g.gw});
  detail::gemm_nt(z, z, g.patch_len(), pyp.data(), py.data(), out.data().data());
  return out;
}

}  // namespace

void check_patch_side(const Shape& s, std::size_t alpha) {
  require_rank(s, 3, "cross-similarity feature map");
  if (alpha == 0 || s[1] % alpha != 0 || s[2] % alpha != 0) {
    throw ConfigError("patch side " + std::to_string(alpha) + " must divide feature map size " +
                      std::to_string(s[1]) + "x" + std::to_string(s[2]));
  }
}

template <typename T>
std::vector<Tensor<T>> patchify(const Tensor<T>& y, std::size_t alpha) {
  const PatchGrid g = grid_for(y.shape(), alpha);
  const auto m = patch_matrix<T>(g, y.data());
  std::vector<Tensor<T>> out;
  out.reserve(g.patches());
  for (std::size_t p = 0; p < g.patches(); ++p) {
    auto first = m.begin() + static_cast<std::ptrdiff_t>(p * g.patch_len());
    out.emplace_back(Shape{g.c, alpha, alpha},
                     std::vector<T>(first, first + static_cast<std::ptrdiff_t>(g.patch_len())));
  }
  return out;
}

template <typename T>
Tensor<T> unpatchify(const std::vector<Tensor<T>>& patches, std::size_t h, std::size_t w) {
  if (patches.empty()) throw DimensionError("unpatchify: no patches");
  const Shape& ps = patches.front().shape();
  require_rank(ps, 3, "unpatchify patch");
  const std::size_t alpha = ps[1];
  const PatchGrid g = grid_for(Shape{ps[0], h, w}, alpha);
  if (patches.size() != g.patches()) {
    throw DimensionError("unpatchify: expected " + std::to_string(g.patches()) + " patches, got " +
                         std::to_string(patches.size()));
  }
  std::vector<T> m;
  m.reserve(g.patches() * g.patch_len());
  for (const auto& p : patches) {
    require_same_shape(p.shape(), ps, "unpatchify patch");
    m.insert(m.end(), p.data().begin(), p.data().end());
  }
  Tensor<T> out(Shape{g.c, h, w});
  scatter_patch_matrix<T>(g, m, out.data());
  return out;
}

template <typename T>
CrossSimTensor<T> cross_similarity(const Tensor<T>& y, const Tensor<T>& y_prime, std::size_t alpha) {
  require_same_shape(y.shape(), y_prime.shape(), "cross_similarity");
  const PatchGrid g = grid_for(y.shape(), alpha);
  return {gram_forward(g, y, y_prime), alpha, y.shape()};
}

template <typename T>
Var<T> cross_similarity(Var<T> y, Var<T> y_prime, std::size_t alpha) {
  if (y.graph != y_prime.graph) throw ContractError("cross_similarity: operands belong to different graphs");
  require_same_shape(y.shape(), y_prime.shape(), "cross_similarity");
  const PatchGrid g = grid_for(y.shape(), alpha);
  Tensor<T> out = gram_forward(g, y.value(), y_prime.value());
  return y.graph->record(OpKind::kCrossSimilarity, {y, y_prime}, std::move(out), [g](BackwardContext<T>& ctx) {
    const std::size_t z = g.patches(), len = g.patch_len();
    auto go = ctx.out_grad();
    auto gy = ctx.input_grad(0);
    auto gyp = ctx.input_grad(1);
    // G = P' P^T, so dP' = dG P and dP = dG^T P'.
    if (!gyp.empty()) {
      const auto py = patch_matrix<T>(g, ctx.input(0).data());
      std::vector<T> d(z * len, T(0));
      detail::gemm_nn(z, len, z, go.data(), py.data(), d.data());
      scatter_patch_matrix<T>(g, d, gyp);
    }
    if (!gy.empty()) {
      const auto pyp = patch_matrix<T>(g, ctx.input(1).data());
      std::vector<T> d(z * len, T(0));
      detail::gemm_tn(z, len, z, go.data(), pyp.data(), d.data());
      scatter_patch_matrix<T>(g, d, gy);
    }
  });
}

template <typename T>
CrossSimTensor<T> cross_similarity_naive(const Tensor<T>& y, const Tensor<T>& y_prime, std::size_t alpha) {
  require_same_shape(y.shape(), y_prime.shape(), "cross_similarity_naive");
  check_patch_side(y.shape(), alpha);
  const std::size_t C = y.dim(0), gh = y.dim(1) / alpha, gw = y.dim(2) / alpha;
  Tensor<T> values(Shape{gh * gw, gh, gw});
  for (std::size_t kr = 0; kr < gh; ++kr) {
    for (std::size_t kc = 0; kc < gw; ++kc) {
      for (std::size_t i = 0; i < gh; ++i) {
        for (std::size_t j = 0; j < gw; ++j) {
          T s = 0;
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t u = 0; u < alpha; ++u) {
              for (std::size_t v = 0; v < alpha; ++v) {
                s += y_prime.at(c, kr * alpha + u, kc * alpha + v) * y.at(c, i * alpha + u, j * alpha + v);
              }
            }
          }
          values.at(kr * gw + kc, i, j) = s;
        }
      }
    }
  }
  return {std::move(values), alpha, y.shape()};
}

#define CLLD_INSTANTIATE_CROSSSIM(T)                                                              \
  template std::vector<Tensor<T>> patchify(const Tensor<T>&, std::size_t);                        \
  template Tensor<T> unpatchify(const std::vector<Tensor<T>>&, std::size_t, std::size_t);         \
  template CrossSimTensor<T> cross_similarity(const Tensor<T>&, const Tensor<T>&, std::size_t);   \
  template Var<T> cross_similarity(Var<T>, Var<T>, std::size_t);                                  \
  template CrossSimTensor<T> cross_similarity_naive(const Tensor<T>&, const Tensor<T>&, std::size_t);

CLLD_INSTANTIATE_CROSSSIM(float)
CLLD_INSTANTIATE_CROSSSIM(double)

}  // namespace clld
