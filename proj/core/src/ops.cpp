#include <algorithm>
#include <cmath>
#include <string>

#include "clld/autograd.hpp"
#include "gemm.hpp"

namespace clld {
namespace {

template <typename T>
Graph<T>& graph_of(Var<T> a) {
  if (!a.graph) throw ContractError("operation on a detached Var");
  return *a.graph;
}

template <typename T>
void check_same_graph(Var<T> a, Var<T> b, const char* what) {
  if (a.graph != b.graph) throw ContractError(std::string(what) + ": operands belong to different graphs");
}

Shape scalar_shape() { return Shape{1}; }

struct ConvGeometry {
  std::size_t cin, h, w, cout, k, stride, pad, oh, ow;
  std::size_t patch() const { return cin * k * k; }
  std::size_t out_pixels() const { return oh * ow; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t P = g.out_pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) && ix < static_cast<long>(g.w);
            row[oy * g.ow + ox] = inside ? x[(c * g.h + iy) * g.w + ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t P = g.out_pixels();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            dx[(c * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

// Reduction layout for an axis: [outer, axis, inner].
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + s.str());
  }
  AxisSplit out;
  for (std::size_t i = 0; i < axis; ++i) out.outer *= s[i];
  out.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) out.inner *= s[i];
  return out;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  std::vector<std::size_t> dims;
  for (std::size_t i = 0; i < s.rank(); ++i) {
    if (i != axis) dims.push_back(s[i]);
  }
  if (dims.empty()) dims.push_back(1);
  return Shape(std::move(dims));
}

template <typename T, typename Fwd, typename Bwd>
Var<T> unary(OpKind kind, Var<T> x, Fwd fwd, Bwd bwd) {
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return graph_of(x).record(kind, {x}, std::move(out), [bwd](BackwardContext<T>& ctx) {
    auto gx = ctx.input_grad(0);
    if (gx.empty()) return;
    const auto& xin = ctx.input(0);
    const auto& y = ctx.output();
    auto go = ctx.out_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * bwd(xin[i], y[i]);
  });
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, std::size_t stride, std::size_t padding) {
  check_same_graph(x, kernel, "conv2d");
  const auto& xv = x.value();
  const auto& kv = kernel.value();
  require_rank(xv.shape(), 3, "conv2d input");
  require_rank(kv.shape(), 4, "conv2d kernel");
  if (kv.dim(1) != xv.dim(0)) {
    throw DimensionError("conv2d: axis 1 of kernel (" + std::to_string(kv.dim(1)) +
                         ") must equal input channels (" + std::to_string(xv.dim(0)) + ")");
  }
  if (kv.dim(2) != kv.dim(3)) throw DimensionError("conv2d: kernel axes 2 and 3 must be equal");
  if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
  ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), kv.dim(0), kv.dim(2), stride, padding, 0, 0};
  if (g.h + 2 * padding < g.k) throw DimensionError("conv2d: axis 1 (height) smaller than kernel");
  if (g.w + 2 * padding < g.k) throw DimensionError("conv2d: axis 2 (width) smaller than kernel");
  g.oh = (g.h + 2 * padding - g.k) / stride + 1;
  g.ow = (g.w + 2 * padding - g.k) / stride + 1;

  Tensor<T> out(Shape{g.cout, g.oh, g.ow});
  const std::size_t P = g.out_pixels();
  if (g.is_pointwise()) {
    detail::gemm_nn(g.cout, P, g.patch(), kv.data().data(), xv.data().data(), out.data().data());
  } else {
    std::vector<T> col(g.patch() * P);
    im2col(g, xv.data().data(), col.data());
    detail::gemm_nn(g.cout, P, g.patch(), kv.data().data(), col.data(), out.data().data());
  }

  return graph_of(x).record(OpKind::kConv2d, {x, kernel}, std::move(out), [g](BackwardContext<T>& ctx) {
    const std::size_t P = g.out_pixels();
    auto go = ctx.out_grad();
    const auto& xin = ctx.input(0);
    const auto& kin = ctx.input(1);
    auto gx = ctx.input_grad(0);
    auto gk = ctx.input_grad(1);
    std::vector<T> col;
    const T* colp = xin.data().data();
    if (!g.is_pointwise()) {
      col.resize(g.patch() * P);
      im2col(g, xin.data().data(), col.data());
      colp = col.data();
    }
    if (!gk.empty()) detail::gemm_nt(g.cout, g.patch(), P, go.data(), colp, gk.data());
    if (!gx.empty()) {
      if (g.is_pointwise()) {
        detail::gemm_tn(g.patch(), P, g.cout, kin.data().data(), go.data(), gx.data());
      } else {
        std::vector<T> dcol(g.patch() * P, T(0));
        detail::gemm_tn(g.patch(), P, g.cout, kin.data().data(), go.data(), dcol.data());
        col2im(g, dcol.data(), gx.data());
      }
    }
  });
}

template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias) {
  check_same_graph(x, bias, "add_channel_bias");
  const auto& xv = x.value();
  const auto& bv = bias.value();
  require_rank(xv.shape(), 3, "add_channel_bias input");
  if (bv.size() != xv.dim(0)) {
    throw DimensionError("add_channel_bias: bias length " + std::to_string(bv.size()) +
                         " does not match axis 0 extent " + std::to_string(xv.dim(0)));
  }
  const std::size_t C = xv.dim(0), HW = xv.dim(1) * xv.dim(2);
  Tensor<T> out = xv;
  out.set_requires_grad(false);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < HW; ++i) out[c * HW + i] += bv[c];
  }
  return graph_of(x).record(OpKind::kAddChannelBias, {x, bias}, std::move(out), [C, HW](BackwardContext<T>& ctx) {
    auto go = ctx.out_grad();
    auto gx = ctx.input_grad(0);
    auto gb = ctx.input_grad(1);
    if (!gx.empty()) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    }
    if (!gb.empty()) {
      for (std::size_t c = 0; c < C; ++c) {
        T s = 0;
        for (std::size_t i = 0; i < HW; ++i) s += go[c * HW + i];
        gb[c] += s;
      }
    }
  });
}

template <typename T>
Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, std::size_t group_size, T eps) {
  check_same_graph(x, gamma, "group_norm");
  check_same_graph(x, beta, "group_norm");
  const auto& xv = x.value();
  require_rank(xv.shape(), 3, "group_norm input");
  const std::size_t C = xv.dim(0), HW = xv.dim(1) * xv.dim(2);
  if (gamma.value().size() != C || beta.value().size() != C) {
    throw DimensionError("group_norm: affine parameters must have length equal to axis 0 (" + std::to_string(C) + ")");
  }
  if (group_size == 0) throw ConfigError("group_norm: group size must be >= 1");
  const std::size_t gs = std::min(group_size, C);
  if (C % gs != 0) {
    throw ConfigError("group_norm: group size " + std::to_string(gs) + " does not divide " + std::to_string(C) + " channels");
  }
  const std::size_t groups = C / gs;
  const std::size_t n = gs * HW;

  std::vector<T> xhat(xv.size());
  std::vector<T> rstd(groups);
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor<T> out(xv.shape());
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * n;
    T m = 0;
    for (std::size_t i = 0; i < n; ++i) m += xv[base + i];
    m /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = xv[base + i] - m;
      var += d * d;
    }
    var /= static_cast<T>(n);
    rstd[g] = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = (base + i) / HW;
      xhat[base + i] = (xv[base + i] - m) * rstd[g];
      out[base + i] = gv[c] * xhat[base + i] + bv[c];
    }
  }

  return graph_of(x).record(
      OpKind::kGroupNorm, {x, gamma, beta}, std::move(out),
      [xhat = std::move(xhat), rstd = std::move(rstd), C, HW, gs, groups, n](BackwardContext<T>& ctx) {
        auto go = ctx.out_grad();
        const auto& gv = ctx.input(1);
        auto gx = ctx.input_grad(0);
        auto ggamma = ctx.input_grad(1);
        auto gbeta = ctx.input_grad(2);
        for (std::size_t c = 0; c < C; ++c) {
          T sg = 0, sb = 0;
          for (std::size_t i = 0; i < HW; ++i) {
            sg += go[c * HW + i] * xhat[c * HW + i];
            sb += go[c * HW + i];
          }
          if (!ggamma.empty()) ggamma[c] += sg;
          if (!gbeta.empty()) gbeta[c] += sb;
        }
        if (gx.empty()) return;
        for (std::size_t g = 0; g < groups; ++g) {
          const std::size_t base = g * n;
          T sum_d = 0, sum_dx = 0;
          for (std::size_t i = 0; i < n; ++i) {
            const T d = go[base + i] * gv[(base + i) / HW];
            sum_d += d;
            sum_dx += d * xhat[base + i];
          }
          const T inv_n = T(1) / static_cast<T>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const T d = go[base + i] * gv[(base + i) / HW];
            gx[base + i] += rstd[g] * (d - inv_n * sum_d - xhat[base + i] * inv_n * sum_dx);
          }
        }
        (void)gs;
      });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary<T>(
      OpKind::kRelu, x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary<T>(
      OpKind::kSigmoid, x,
      [](T v) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> scale(Var<T> x, T factor) {
  return unary<T>(
      OpKind::kScale, x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, T offset) {
  return unary<T>(
      OpKind::kAddScalar, x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> clamp_min(Var<T> x, T floor) {
  return unary<T>(
      OpKind::kClampMin, x, [floor](T v) { return v > floor ? v : floor; },
      [floor](T v, T) { return v > floor ? T(1) : T(0); });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_graph(a, b, "add");
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return graph_of(a).record(OpKind::kAdd, {a, b}, std::move(out), [](BackwardContext<T>& ctx) {
    auto go = ctx.out_grad();
    for (std::size_t k = 0; k < 2; ++k) {
      auto g = ctx.input_grad(k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  check_same_graph(a, b, "sub");
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return graph_of(a).record(OpKind::kSub, {a, b}, std::move(out), [](BackwardContext<T>& ctx) {
    auto go = ctx.out_grad();
    auto ga = ctx.input_grad(0);
    auto gb = ctx.input_grad(1);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  check_same_graph(a, b, "mul");
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return graph_of(a).record(OpKind::kMul, {a, b}, std::move(out), [](BackwardContext<T>& ctx) {
    auto go = ctx.out_grad();
    auto ga = ctx.input_grad(0);
    auto gb = ctx.input_grad(1);
    const auto& av = ctx.input(0);
    const auto& bv = ctx.input(1);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av[i];
  });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  check_same_graph(a, b, "div");
  require_same_shape(a.shape(), b.shape(), "div");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] / b.value()[i];
  return graph_of(a).record(OpKind::kDiv, {a, b}, std::move(out), [](BackwardContext<T>& ctx) {
    auto go = ctx.out_grad();
    auto ga = ctx.input_grad(0);
    auto gb = ctx.input_grad(1);
    const auto& bv = ctx.input(1);
    const auto& y = ctx.output();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] / bv[i];
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i] * y[i] / bv[i];
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (auto v : x.value().data()) s += v;
  return graph_of(x).record(OpKind::kSum, {x}, Tensor<T>(scalar_shape(), s), [](BackwardContext<T>& ctx) {
    auto gx = ctx.input_grad(0);
    const T go = ctx.out_grad()[0];
    for (auto& g : gx) g += go;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  T s = 0;
  for (auto v : x.value().data()) s += v;
  const T n = static_cast<T>(x.value().size());
  return graph_of(x).record(OpKind::kMean, {x}, Tensor<T>(scalar_shape(), s / n), [n](BackwardContext<T>& ctx) {
    auto gx = ctx.input_grad(0);
    const T go = ctx.out_grad()[0] / n;
    for (auto& g : gx) g += go;
  });
}

template <typename T>
Var<T> sum(Var<T> x, std::size_t axis) {
  const auto& xv = x.value();
  const AxisSplit s = split_axis(xv.shape(), axis);
  Tensor<T> out(drop_axis(xv.shape(), axis));
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t a = 0; a < s.extent; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xv[(o * s.extent + a) * s.inner + i];
    }
  }
  return graph_of(x).record(OpKind::kSumAxis, {x}, std::move(out), [s](BackwardContext<T>& ctx) {
    auto gx = ctx.input_grad(0);
    auto go = ctx.out_grad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t a = 0; a < s.extent; ++a) {
        for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.extent + a) * s.inner + i] += go[o * s.inner + i];
      }
    }
  });
}

template <typename T>
Var<T> l2_norm(Var<T> x) {
  T s = 0;
  for (auto v : x.value().data()) s += v * v;
  return graph_of(x).record(OpKind::kL2Norm, {x}, Tensor<T>(scalar_shape(), std::sqrt(s)), [](BackwardContext<T>& ctx) {
    auto gx = ctx.input_grad(0);
    const T norm = ctx.output()[0];
    if (norm == T(0)) return;
    const T k = ctx.out_grad()[0] / norm;
    const auto& xv = ctx.input(0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += k * xv[i];
  });
}

template <typename T>
Var<T> l2_norm(Var<T> x, std::size_t axis) {
  const auto& xv = x.value();
  const AxisSplit s = split_axis(xv.shape(), axis);
  Tensor<T> out(drop_axis(xv.shape(), axis));
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t a = 0; a < s.extent; ++a) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const T v = xv[(o * s.extent + a) * s.inner + i];
        out[o * s.inner + i] += v * v;
      }
    }
  }
  for (auto& v : out.data()) v = std::sqrt(v);
  return graph_of(x).record(OpKind::kL2NormAxis, {x}, std::move(out), [s](BackwardContext<T>& ctx) {
    auto gx = ctx.input_grad(0);
    auto go = ctx.out_grad();
    const auto& y = ctx.output();
    const auto& xin = ctx.input(0);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t a = 0; a < s.extent; ++a) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t r = o * s.inner + i;
          if (y[r] == T(0)) continue;
          const std::size_t k = (o * s.extent + a) * s.inner + i;
          gx[k] += go[r] * xin[k] / y[r];
        }
      }
    }
  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const auto& xv = x.value();
  require_rank(xv.shape(), 3, "global_avg_pool input");
  const std::size_t C = xv.dim(0), HW = xv.dim(1) * xv.dim(2);
  Tensor<T> out(Shape{C});
  for (std::size_t c = 0; c < C; ++c) {
    T s = 0;
    for (std::size_t i = 0; i < HW; ++i) s += xv[c * HW + i];
    out[c] = s / static_cast<T>(HW);
  }
  return graph_of(x).record(OpKind::kGlobalAvgPool, {x}, std::move(out), [C, HW](BackwardContext<T>& ctx) {
    auto gx = ctx.input_grad(0);
    auto go = ctx.out_grad();
    for (std::size_t c = 0; c < C; ++c) {
      const T g = go[c] / static_cast<T>(HW);
      for (std::size_t i = 0; i < HW; ++i) gx[c * HW + i] += g;
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return graph_of(x).record(OpKind::kReshape, {x}, std::move(out), [](BackwardContext<T>& ctx) {
    auto gx = ctx.input_grad(0);
    auto go = ctx.out_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
  });
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> upsample_bilinear(Var<T> x, std::size_t factor) {
  const auto& xv = x.value();
  require_rank(xv.shape(), 3, "upsample_bilinear input");
  if (factor == 0) throw ConfigError("upsample_bilinear: factor must be >= 1");
  const std::size_t C = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const std::size_t H = h * factor, W = w * factor;
  auto ty = bilinear_taps(h, factor);
  auto tx = bilinear_taps(w, factor);
  Tensor<T> out(Shape{C, H, W});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < H; ++oy) {
      const T fy = static_cast<T>(ty[oy].frac);
      for (std::size_t ox = 0; ox < W; ++ox) {
        const T fx = static_cast<T>(tx[ox].frac);
        const T v00 = xv.at(c, ty[oy].lo, tx[ox].lo), v01 = xv.at(c, ty[oy].lo, tx[ox].hi);
        const T v10 = xv.at(c, ty[oy].hi, tx[ox].lo), v11 = xv.at(c, ty[oy].hi, tx[ox].hi);
        out.at(c, oy, ox) = (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) + fy * ((T(1) - fx) * v10 + fx * v11);
      }
    }
  }
  return graph_of(x).record(
      OpKind::kUpsampleBilinear, {x}, std::move(out),
      [ty = std::move(ty), tx = std::move(tx), C, h, w, H, W](BackwardContext<T>& ctx) {
        auto gx = ctx.input_grad(0);
        auto go = ctx.out_grad();
        for (std::size_t c = 0; c < C; ++c) {
          T* g = gx.data() + c * h * w;
          for (std::size_t oy = 0; oy < H; ++oy) {
            const T fy = static_cast<T>(ty[oy].frac);
            for (std::size_t ox = 0; ox < W; ++ox) {
              const T fx = static_cast<T>(tx[ox].frac);
              const T d = go[(c * H + oy) * W + ox];
              g[ty[oy].lo * w + tx[ox].lo] += d * (T(1) - fy) * (T(1) - fx);
              g[ty[oy].lo * w + tx[ox].hi] += d * (T(1) - fy) * fx;
              g[ty[oy].hi * w + tx[ox].lo] += d * fy * (T(1) - fx);
              g[ty[oy].hi * w + tx[ox].hi] += d * fy * fx;
            }
          }
        }
      });
}

template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& targets, T pos_weight) {
  const auto& z = logits.value();
  require_same_shape(z.shape(), targets.shape(), "bce_with_logits");
  auto softplus = [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); };
  T s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T t = targets[i];
    s += pos_weight * t * softplus(-z[i]) + (T(1) - t) * softplus(z[i]);
  }
  const T n = static_cast<T>(z.size());
  return graph_of(logits).record(
      OpKind::kBceWithLogits, {logits}, Tensor<T>(scalar_shape(), s / n),
      [targets, pos_weight, n](BackwardContext<T>& ctx) {
        auto gz = ctx.input_grad(0);
        const auto& zv = ctx.input(0);
        const T go = ctx.out_grad()[0] / n;
        for (std::size_t i = 0; i < gz.size(); ++i) {
          const T v = zv[i];
          const T sig = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
          const T t = targets[i];
          gz[i] += go * (-pos_weight * t * (T(1) - sig) + (T(1) - t) * sig);
        }
      });
}

#define CLLD_INSTANTIATE_OPS(T)                                                           \
  template Var<T> conv2d(Var<T>, Var<T>, std::size_t, std::size_t);                       \
  template Var<T> add_channel_bias(Var<T>, Var<T>);                                       \
  template Var<T> group_norm(Var<T>, Var<T>, Var<T>, std::size_t, T);                     \
  template Var<T> relu(Var<T>);                                                           \
  template Var<T> sigmoid(Var<T>);                                                        \
  template Var<T> add(Var<T>, Var<T>);                                                    \
  template Var<T> sub(Var<T>, Var<T>);                                                    \
  template Var<T> mul(Var<T>, Var<T>);                                                    \
  template Var<T> div(Var<T>, Var<T>);                                                    \
  template Var<T> scale(Var<T>, T);                                                       \
  template Var<T> add_scalar(Var<T>, T);                                                  \
  template Var<T> clamp_min(Var<T>, T);                                                   \
  template Var<T> sum(Var<T>);                                                            \
  template Var<T> mean(Var<T>);                                                           \
  template Var<T> sum(Var<T>, std::size_t);                                               \
  template Var<T> l2_norm(Var<T>);                                                        \
  template Var<T> l2_norm(Var<T>, std::size_t);                                           \
  template Var<T> global_avg_pool(Var<T>);                                                \
  template Var<T> reshape(Var<T>, Shape);                                                 \
  template Var<T> upsample_bilinear(Var<T>, std::size_t);                                 \
  template Var<T> bce_with_logits(Var<T>, const Tensor<T>&, T);

CLLD_INSTANTIATE_OPS(float)
CLLD_INSTANTIATE_OPS(double)

}  // namespace clld
