#include <doctest.h>

#include <cmath>

#include "clld/autograd.hpp"
#include "clld/grad_check.hpp"
#include "helpers.hpp"

using namespace clld;
using test::max_abs_diff;
using test::random_tensor;

namespace {

// Quadruple-loop cross-correlation reference.
Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& k, std::size_t stride, std::size_t pad) {
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = k.dim(0), K = k.dim(2);
  const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  Tensor<double> out(Shape{O, Ho, Wo});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t u = 0; u < K; ++u)
            for (std::size_t v = 0; v < K; ++v) {
              const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
              const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad);
              if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
              acc += x.at(c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)) *
                     k[((o * C + c) * K + u) * K + v];
            }
        out.at(o, i, j) = acc;
      }
  return out;
}

template <typename Fn>
Tensor<double> eval1(const Tensor<double>& x, Fn fn) {
  Graph<double> g;
  return fn(g, g.bind(x)).value();
}

}  // namespace

TEST_CASE("conv2d identity and zero kernels") {
  Graph<double> g;
  auto x = g.constant(Tensor<double>::ones(Shape{1, 3, 3}));
  auto id = g.constant(Tensor<double>::ones(Shape{1, 1, 1, 1}));
  CHECK(conv2d(x, id, 1, 0).value().storage() == std::vector<double>(9, 1.0));

  Rng rng(3);
  auto y = g.constant(random_tensor<double>(Shape{3, 7, 5}, rng));
  auto zero = g.constant(Tensor<double>::zeros(Shape{4, 3, 3, 3}));
  for (double v : conv2d(y, zero, 2, 1).value().data()) CHECK(v == 0.0);
}

TEST_CASE("conv2d matches the loop reference on 200 random cases") {
  Rng rng(11);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t C = 1 + rng.below(3), O = 1 + rng.below(4), K = 1 + 2 * rng.below(2);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
    const std::size_t H = K + rng.below(6), W = K + rng.below(6);
    Graph<double> g;
    auto xt = random_tensor<double>(Shape{C, H, W}, rng);
    auto kt = random_tensor<double>(Shape{O, C, K, K}, rng);
    const auto out = conv2d(g.bind(xt), g.bind(kt), stride, pad).value();
    const auto ref = conv_reference(xt, kt, stride, pad);
    REQUIRE(out.shape() == ref.shape());
    worst = std::max(worst, max_abs_diff(out, ref));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("conv2d is linear in its input") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto x = random_tensor<double>(Shape{2, 6, 6}, rng);
    auto y = random_tensor<double>(Shape{2, 6, 6}, rng);
    auto k = random_tensor<double>(Shape{3, 2, 3, 3}, rng);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    Tensor<double> mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    Graph<double> g;
    const auto lhs = conv2d(g.bind(mix), g.bind(k), 1, 1).value();
    const auto cx = conv2d(g.bind(x), g.bind(k), 1, 1).value();
    const auto cy = conv2d(g.bind(y), g.bind(k), 1, 1).value();
    Tensor<double> rhs(lhs.shape());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * cx[i] + b * cy[i];
    CHECK(max_abs_diff(lhs, rhs) < 1e-6);
  }
}

TEST_CASE("conv2d shape errors name the axis") {
  Graph<float> g;
  auto x = g.constant(Tensor<float>(Shape{3, 5, 5}));
  auto k = g.constant(Tensor<float>(Shape{2, 4, 3, 3}));
  try {
    conv2d(x, k, 1, 0);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("axis") != std::string::npos);
  }
  auto big = g.constant(Tensor<float>(Shape{3, 3, 7, 7}));
  CHECK_THROWS_AS(conv2d(x, big, 1, 0), DimensionError);
}

TEST_CASE("elementwise ops and reductions agree with scalar loops") {
  Rng rng(21);
  for (int t = 0; t < 25; ++t) {
    const auto a = random_tensor<double>(Shape{3, 4, 5}, rng);
    const auto b = random_tensor<double>(Shape{3, 4, 5}, rng, 0.5, 2.0);
    Graph<double> g;
    auto va = g.bind(a), vb = g.bind(b);
    const auto r_add = add(va, vb).value(), r_sub = sub(va, vb).value();
    const auto r_mul = mul(va, vb).value(), r_div = div(va, vb).value();
    const auto r_relu = relu(va).value(), r_sig = sigmoid(va).value();
    const auto r_scale = scale(va, 2.5).value(), r_shift = add_scalar(va, -0.25).value();
    const auto r_clamp = clamp_min(va, 0.1).value();
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(r_add[i] == doctest::Approx(a[i] + b[i]).epsilon(1e-12));
      CHECK(r_sub[i] == doctest::Approx(a[i] - b[i]).epsilon(1e-12));
      CHECK(r_mul[i] == doctest::Approx(a[i] * b[i]).epsilon(1e-12));
      CHECK(r_div[i] == doctest::Approx(a[i] / b[i]).epsilon(1e-12));
      CHECK(r_relu[i] == (a[i] > 0 ? a[i] : 0.0));
      CHECK(r_sig[i] == doctest::Approx(1.0 / (1.0 + std::exp(-a[i]))).epsilon(1e-12));
      CHECK(r_scale[i] == doctest::Approx(2.5 * a[i]).epsilon(1e-12));
      CHECK(r_shift[i] == doctest::Approx(a[i] - 0.25).epsilon(1e-12));
      CHECK(r_clamp[i] == std::max(a[i], 0.1));
      s += a[i];
      ss += a[i] * a[i];
    }
    CHECK(std::abs(sum(va).value()[0] - s) < 1e-6);
    CHECK(std::abs(mean(va).value()[0] - s / 60.0) < 1e-6);
    CHECK(std::abs(l2_norm(va).value()[0] - std::sqrt(ss)) < 1e-6);

    const auto per_pixel = l2_norm(va, 0).value();
    const auto col_sum = sum(va, 2).value();
    const auto gap = global_avg_pool(va).value();
    REQUIRE(per_pixel.shape() == Shape{4, 5});
    REQUIRE(col_sum.shape() == Shape{3, 4});
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t w = 0; w < 5; ++w) {
        double n = 0.0;
        for (std::size_t c = 0; c < 3; ++c) n += a.at(c, h, w) * a.at(c, h, w);
        CHECK(std::abs(per_pixel[h * 5 + w] - std::sqrt(n)) < 1e-6);
      }
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0;
      for (std::size_t h = 0; h < 4; ++h) {
        double row = 0.0;
        for (std::size_t w = 0; w < 5; ++w) row += a.at(c, h, w);
        CHECK(std::abs(col_sum[c * 4 + h] - row) < 1e-6);
        m += row;
      }
      CHECK(std::abs(gap[c] - m / 20.0) < 1e-6);
    }
  }
}

TEST_CASE("small closed forms") {
  Graph<double> g;
  auto v = g.constant(Tensor<double>(Shape{2}, std::vector<double>{3, 4}));
  CHECK(l2_norm(v).value()[0] == 5.0);
  CHECK(l2_norm(g.constant(Tensor<double>::zeros(Shape{3}))).value()[0] == 0.0);
  auto c = g.constant(Tensor<double>(Shape{3, 4, 4}, 2.75));
  for (double x : global_avg_pool(c).value().data()) CHECK(x == 2.75);
}

TEST_CASE("group_norm matches a loop reference") {
  Rng rng(8);
  const auto x = random_tensor<double>(Shape{8, 3, 3}, rng, -2, 3);
  const auto gamma = random_tensor<double>(Shape{8}, rng);
  const auto beta = random_tensor<double>(Shape{8}, rng);
  Graph<double> g;
  const auto out = group_norm(g.bind(x), g.bind(gamma), g.bind(beta), 4, 1e-5).value();
  for (std::size_t grp = 0; grp < 2; ++grp) {
    double m = 0.0, var = 0.0;
    for (std::size_t c = grp * 4; c < grp * 4 + 4; ++c)
      for (std::size_t i = 0; i < 9; ++i) m += x[c * 9 + i];
    m /= 36.0;
    for (std::size_t c = grp * 4; c < grp * 4 + 4; ++c)
      for (std::size_t i = 0; i < 9; ++i) var += (x[c * 9 + i] - m) * (x[c * 9 + i] - m);
    var /= 36.0;
    for (std::size_t c = grp * 4; c < grp * 4 + 4; ++c)
      for (std::size_t i = 0; i < 9; ++i) {
        const double ref = (x[c * 9 + i] - m) / std::sqrt(var + 1e-5) * gamma[c] + beta[c];
        CHECK(std::abs(out[c * 9 + i] - ref) < 1e-9);
      }
  }
  CHECK_THROWS_AS(group_norm(g.bind(x), g.bind(gamma), g.bind(beta), 3, 1e-5), ConfigError);
}

TEST_CASE("bilinear upsampling keeps constants and averages neighbours") {
  Graph<double> g;
  auto c = g.constant(Tensor<double>(Shape{2, 3, 3}, 1.25));
  const auto up = upsample_bilinear(c, 4).value();
  CHECK(up.shape() == Shape{2, 12, 12});
  for (double v : up.data()) CHECK(v == doctest::Approx(1.25));
  // Half-pixel centres: the first two outputs of a 2-pixel row [0, 1] at factor 2.
  auto row = g.constant(Tensor<double>(Shape{1, 1, 2}, std::vector<double>{0.0, 1.0}));
  const auto r = upsample_bilinear(row, 2).value();
  CHECK(r.shape() == Shape{1, 2, 4});
  CHECK(r.storage() == std::vector<double>{0.0, 0.25, 0.75, 1.0, 0.0, 0.25, 0.75, 1.0});
}

TEST_CASE("backward on simple closed forms") {
  Rng rng(2);
  Tensor<double> x = random_tensor<double>(Shape{2, 3, 4}, rng);
  x.set_requires_grad(true);
  {
    Graph<double> g;
    g.backward(sum(g.leaf(x)));
    for (double v : x.grad()) CHECK(v == 1.0);
  }
  x.zero_grad();
  {
    Graph<double> g;
    auto v = g.leaf(x);
    g.backward(sum(mul(v, v)));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * x[i]));
  }
}

TEST_CASE("backward contract violations") {
  Tensor<double> x(Shape{3}, 1.0);
  x.set_requires_grad(true);
  Graph<double> g;
  auto v = g.leaf(x);
  CHECK_THROWS_AS(g.backward(scale(v, 2.0)), ContractError);
  auto constant_only = sum(g.constant(Tensor<double>(Shape{3}, 1.0)));
  CHECK_THROWS_AS(g.backward(constant_only), ContractError);
}

TEST_CASE("two backward passes give exactly twice the gradient") {
  Rng rng(4);
  Tensor<double> x = random_tensor<double>(Shape{2, 5, 5}, rng);
  Tensor<double> k = random_tensor<double>(Shape{3, 2, 3, 3}, rng);
  k.set_requires_grad(true);
  auto run = [&] {
    Graph<double> g;
    auto y = relu(conv2d(g.bind(x), g.leaf(k), 1, 1));
    g.backward(sum(mul(y, y)));
  };
  run();
  const std::vector<double> once(k.grad().begin(), k.grad().end());
  run();
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(k.grad()[i] == 2.0 * once[i]);
}

TEST_CASE("backward visits every node once and the tape is topological") {
  Tensor<double> x(Shape{4}, 0.5);
  x.set_requires_grad(true);
  Graph<double> g;
  auto v = g.leaf(x);
  auto a = mul(v, v);
  auto b = add(a, v);
  auto loss = sum(add(b, a));
  for (std::size_t id = 0; id < g.size(); ++id) {
    for (auto in : g.inputs(Var<double>{&g, id})) CHECK(in < id);
  }
  g.backward(loss);
  // One backward call per op node; the single leaf has none.
  CHECK(g.last_backward_visits() == g.size() - 1);
  // d/dx of sum(2x^2 + x) = 4x + 1
  for (double gr : x.grad()) CHECK(gr == doctest::Approx(3.0));
}

TEST_CASE("relu derivative at zero is zero") {
  Tensor<double> x(Shape{3}, std::vector<double>{-1.0, 0.0, 2.0});
  x.set_requires_grad(true);
  Graph<double> g;
  g.backward(sum(relu(g.leaf(x))));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("forward values are bit-identical across runs") {
  Rng r1(9), r2(9);
  const auto x1 = random_tensor<float>(Shape{3, 16, 16}, r1), x2 = random_tensor<float>(Shape{3, 16, 16}, r2);
  const auto k1 = random_tensor<float>(Shape{8, 3, 3, 3}, r1), k2 = random_tensor<float>(Shape{8, 3, 3, 3}, r2);
  Graph<float> g1, g2;
  CHECK(test::bit_equal(conv2d(g1.bind(x1), g1.bind(k1), 2, 1).value(),
                        conv2d(g2.bind(x2), g2.bind(k2), 2, 1).value()));
}

TEST_CASE("grad_check on sum is exact") {
  Rng rng(1);
  const auto x = random_tensor<double>(Shape{3, 4}, rng);
  GraphFunction<double> f = [](Graph<double>&, Var<double> v) { return sum(v); };
  CHECK(grad_check(f, x, 1e-4) < 1e-10);
}

TEST_CASE("grad_check passes for every differentiable op") {
  Rng rng(17);
  const double eps = 1e-5;
  // Weighted sum so every output coordinate matters.
  auto weighted = [](Graph<double>& g, Var<double> y) {
    Rng wr(42);
    auto w = g.constant(random_tensor<double>(y.shape(), wr));
    return sum(mul(y, w));
  };
  const auto x = random_tensor<double>(Shape{4, 5, 5}, rng);
  const auto pos = random_tensor<double>(Shape{4, 5, 5}, rng, 0.5, 2.0);
  const auto k = random_tensor<double>(Shape{3, 4, 3, 3}, rng);
  const auto gamma = random_tensor<double>(Shape{4}, rng);
  const auto beta = random_tensor<double>(Shape{4}, rng);
  const auto bias = random_tensor<double>(Shape{4}, rng);

  struct Case {
    const char* name;
    GraphFunction<double> f;
    Tensor<double> at;
  };
  std::vector<Case> cases{
      {"conv2d input", [&](Graph<double>& g, Var<double> v) { return weighted(g, conv2d(v, g.bind(k), 2, 1)); }, x},
      {"conv2d kernel", [&](Graph<double>& g, Var<double> v) { return weighted(g, conv2d(g.bind(x), v, 1, 1)); }, k},
      {"group_norm input", [&](Graph<double>& g, Var<double> v) { return weighted(g, group_norm(v, g.bind(gamma), g.bind(beta), 2)); }, x},
      {"group_norm gamma", [&](Graph<double>& g, Var<double> v) { return weighted(g, group_norm(g.bind(x), v, g.bind(beta), 2)); }, gamma},
      {"channel bias", [&](Graph<double>& g, Var<double> v) { return weighted(g, add_channel_bias(g.bind(x), v)); }, bias},
      {"sigmoid", [&](Graph<double>& g, Var<double> v) { return weighted(g, sigmoid(v)); }, x},
      {"div", [&](Graph<double>& g, Var<double> v) { return weighted(g, div(g.bind(x), v)); }, pos},
      {"mul", [&](Graph<double>& g, Var<double> v) { return weighted(g, mul(v, v)); }, x},
      {"l2_norm axis", [&](Graph<double>& g, Var<double> v) { return weighted(g, l2_norm(v, 0)); }, x},
      {"l2_norm", [&](Graph<double>&, Var<double> v) { return l2_norm(v); }, x},
      {"sum axis", [&](Graph<double>& g, Var<double> v) { return weighted(g, sum(v, 1)); }, x},
      {"mean", [&](Graph<double>&, Var<double> v) { return mean(mul(v, v)); }, x},
      {"global_avg_pool", [&](Graph<double>& g, Var<double> v) { return weighted(g, global_avg_pool(v)); }, x},
      {"upsample", [&](Graph<double>& g, Var<double> v) { return weighted(g, upsample_bilinear(v, 2)); }, x},
      {"reshape", [&](Graph<double>& g, Var<double> v) { return weighted(g, reshape(v, Shape{20, 5})); }, x},
      {"clamp_min", [&](Graph<double>& g, Var<double> v) { return weighted(g, clamp_min(v, 0.7)); }, pos},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    CHECK(grad_check(c.f, c.at, eps) < 1e-5);
  }

  Tensor<double> targets(Shape{5, 5});
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = (i % 3 == 0) ? 1.0 : 0.0;
  const auto logits = random_tensor<double>(Shape{5, 5}, rng, -3, 3);
  GraphFunction<double> bce = [&](Graph<double>&, Var<double> v) { return bce_with_logits(v, targets, 3.0); };
  CHECK(grad_check(bce, logits, eps) < 1e-5);
}

TEST_CASE("grad_check flags a wrong hand-written gradient") {
  Rng rng(6);
  const auto x = random_tensor<double>(Shape{6}, rng, 0.5, 1.5);
  // Square with a deliberately wrong derivative (x instead of 2x).
  GraphFunction<double> f = [](Graph<double>& g, Var<double> v) {
    Tensor<double> out(v.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v.value()[i] * v.value()[i];
    auto sq = g.record(OpKind::kMul, {v}, std::move(out), [](BackwardContext<double>& ctx) {
      auto gx = ctx.input_grad(0);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += ctx.out_grad()[i] * ctx.input(0)[i];
    });
    return sum(sq);
  };
  CHECK(grad_check(f, x, 1e-5) > 1e-2);
}

TEST_CASE("grad_check rejects non-finite values") {
  const Tensor<double> x(Shape{2}, std::vector<double>{0.0, 1.0});
  GraphFunction<double> f = [](Graph<double>& g, Var<double> v) {
    return sum(div(g.constant(Tensor<double>(Shape{2}, 1.0)), v));
  };
  CHECK_THROWS_AS(grad_check(f, x, 1e-6), EvaluationError);
}
