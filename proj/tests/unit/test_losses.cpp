#include <doctest.h>

#include <cmath>

#include "clld/crosssim.hpp"
#include "clld/grad_check.hpp"
#include "clld/losses.hpp"
#include "helpers.hpp"

using namespace clld;
using test::random_tensor;

namespace {

Tensor<double> negated(const Tensor<double>& y) {
  Tensor<double> out(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = -y[i];
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / (std::max(std::sqrt(na), 1e-8) * std::max(std::sqrt(nb), 1e-8));
}

// Composed oracle: explicit patch loops then a scalar cosine.
double similarity_oracle(const Tensor<double>& y, const Tensor<double>& yp, std::size_t a) {
  auto cs = [a](const Tensor<double>& p, const Tensor<double>& q) {
    const std::size_t c = p.dim(0), gh = p.dim(1) / a, gw = p.dim(2) / a;
    std::vector<double> out;
    for (std::size_t k = 0; k < gh * gw; ++k)
      for (std::size_t m = 0; m < gh * gw; ++m) {
        double acc = 0;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t u = 0; u < a; ++u)
            for (std::size_t v = 0; v < a; ++v)
              acc += q.at(ch, (k / gw) * a + u, (k % gw) * a + v) * p.at(ch, (m / gw) * a + u, (m % gw) * a + v);
        out.push_back(acc);
      }
    return out;
  };
  return -cosine(cs(y, yp), cs(yp, y));
}

LossBreakdown breakdown(const Tensor<double>& y, const Tensor<double>& yp, std::size_t a = 1,
                        LossSwitches sw = {}) {
  return clld_loss_value(y, yp, a, 1e-8, sw);
}

}  // namespace

TEST_CASE("consistency loss closed forms") {
  Rng rng(1);
  const auto y = random_tensor<double>(Shape{4, 5, 5}, rng, 0.1, 1.0);
  Graph<double> g;
  CHECK(consistency_loss(g.bind(y), g.bind(y)).value()[0] == doctest::Approx(-1.0).epsilon(1e-12));
  const auto ny = negated(y);
  CHECK(consistency_loss(g.bind(y), g.bind(ny)).value()[0] == doctest::Approx(1.0).epsilon(1e-12));

  Tensor<double> e1(Shape{2, 3, 3}), e2(Shape{2, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) {
    e1[i] = 1.0;
    e2[9 + i] = 1.0;
  }
  CHECK(consistency_loss(g.bind(e1), g.bind(e2)).value()[0] == 0.0);
}

TEST_CASE("similarity loss closed forms and composed oracle") {
  Rng rng(2);
  const auto y = random_tensor<double>(Shape{3, 6, 6}, rng);
  Graph<double> g;
  CHECK(similarity_loss(g.bind(y), g.bind(y), 2).value()[0] == doctest::Approx(-1.0).epsilon(1e-12));
  const auto ny = negated(y);
  CHECK(similarity_loss(g.bind(y), g.bind(ny), 3).value()[0] == doctest::Approx(-1.0).epsilon(1e-12));
  for (int t = 0; t < 20; ++t) {
    const auto a = random_tensor<double>(Shape{1, 4, 4}, rng);
    const auto b = random_tensor<double>(Shape{1, 4, 4}, rng);
    Graph<double> h;
    CHECK(std::abs(similarity_loss(h.bind(a), h.bind(b), 2).value()[0] - similarity_oracle(a, b, 2)) < 1e-6);
  }
}

TEST_CASE("instance loss closed forms") {
  Graph<double> g;
  auto constant_map = [](std::vector<double> v) {
    Tensor<double> t(Shape{v.size(), 2, 2});
    for (std::size_t c = 0; c < v.size(); ++c)
      for (std::size_t i = 0; i < 4; ++i) t[c * 4 + i] = v[c];
    return t;
  };
  const auto a = constant_map({1.0, 2.0}), b = constant_map({-1.0, -2.0}), o = constant_map({2.0, -1.0});
  const auto z = constant_map({0.0, 0.0});
  CHECK(instance_loss(g.bind(a), g.bind(a)).value()[0] == doctest::Approx(0.0));
  CHECK(instance_loss(g.bind(a), g.bind(b)).value()[0] == doctest::Approx(4.0));
  CHECK(instance_loss(g.bind(a), g.bind(o)).value()[0] == doctest::Approx(2.0));
  CHECK(instance_loss(g.bind(a), g.bind(z)).value()[0] == doctest::Approx(2.0));
}

TEST_CASE("combined loss on identical views is -2") {
  Rng rng(3);
  const auto y = random_tensor<double>(Shape{8, 6, 6}, rng);
  for (std::size_t a : {1, 2, 3}) {
    const auto l = breakdown(y, y, a);
    CHECK(std::abs(l.l_cons + 1.0) < 1e-6);
    CHECK(std::abs(l.l_sim + 1.0) < 1e-6);
    CHECK(std::abs(l.l_inst) < 1e-6);
    CHECK(std::abs(l.l_clld + 2.0) < 1e-6);
  }
}

TEST_CASE("breakdown sums exactly and stays in range") {
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    const auto y = random_tensor<double>(Shape{3, 4, 4}, rng, -1, 1);
    const auto yp = random_tensor<double>(Shape{3, 4, 4}, rng, -1, 1);
    const auto l = breakdown(y, yp, 1 + rng.below(2) * 1);
    CHECK(l.l_clld == l.l_cons + l.l_sim + l.l_inst);
    CHECK(l.l_cons >= -1.0 - 1e-12);
    CHECK(l.l_cons <= 1.0 + 1e-12);
    CHECK(l.l_sim >= -1.0 - 1e-12);
    CHECK(l.l_sim <= 1.0 + 1e-12);
    CHECK(l.l_inst >= -1e-12);
    CHECK(l.l_inst <= 4.0 + 1e-12);
  }
}

TEST_CASE("each term is invariant to positive rescaling") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto y = random_tensor<double>(Shape{3, 4, 4}, rng);
    const auto yp = random_tensor<double>(Shape{3, 4, 4}, rng);
    const double a = rng.uniform(0.1, 10), b = rng.uniform(0.1, 10);
    Tensor<double> sy(y.shape()), syp(yp.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
      sy[i] = a * y[i];
      syp[i] = b * yp[i];
    }
    const auto l0 = breakdown(y, yp, 2), l1 = breakdown(sy, syp, 2);
    CHECK(std::abs(l0.l_cons - l1.l_cons) < 1e-6);
    CHECK(std::abs(l0.l_sim - l1.l_sim) < 1e-6);
    CHECK(std::abs(l0.l_inst - l1.l_inst) < 1e-6);
  }
}

TEST_CASE("overwriting a patch raises consistency and similarity losses") {
  int both_up = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto y = random_tensor<double>(Shape{4, 6, 6}, rng);
    Tensor<double> yp = y;
    const std::size_t r0 = 2 * rng.below(3), c0 = 2 * rng.below(3);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t u = 0; u < 2; ++u)
        for (std::size_t v = 0; v < 2; ++v) yp.at(c, r0 + u, c0 + v) = rng.normal();
    const auto clean = breakdown(y, y, 2), masked = breakdown(y, yp, 2);
    if (masked.l_sim > clean.l_sim && masked.l_cons > clean.l_cons) ++both_up;
  }
  CHECK(both_up >= 95);
}

TEST_CASE("switches zero disabled terms") {
  Rng rng(6);
  const auto y = random_tensor<double>(Shape{3, 4, 4}, rng);
  const auto yp = random_tensor<double>(Shape{3, 4, 4}, rng);
  const auto full = breakdown(y, yp);
  const auto no_sim = breakdown(y, yp, 1, {true, false, true});
  CHECK(no_sim.l_sim == 0.0);
  CHECK(no_sim.l_cons == full.l_cons);
  CHECK(no_sim.l_clld == no_sim.l_cons + no_sim.l_inst);
  CHECK_THROWS_AS(breakdown(y, yp, 1, {false, false, false}), ConfigError);
}

TEST_CASE("loss gradients pass finite differences") {
  Rng rng(7);
  const auto y = random_tensor<double>(Shape{3, 6, 6}, rng);
  const auto yp = random_tensor<double>(Shape{3, 6, 6}, rng);
  for (std::size_t a : {1, 2, 3}) {
    GraphFunction<double> f = [&](Graph<double>& g, Var<double> x) { return clld_loss(x, g.bind(yp), a).total; };
    GraphFunction<double> f2 = [&](Graph<double>& g, Var<double> x) { return clld_loss(g.bind(y), x, a).total; };
    CAPTURE(a);
    CHECK(grad_check(f, y, 1e-5) < 1e-5);
    CHECK(grad_check(f2, yp, 1e-5) < 1e-5);
  }
}
