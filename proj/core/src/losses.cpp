#include "clld/losses.hpp"

#include "clld/crosssim.hpp"

namespace clld {
namespace {

template <typename T>
Var<T> guarded_cosine(Var<T> a, Var<T> b, T eps) {
  auto na = clamp_min(l2_norm(a), eps);
  auto nb = clamp_min(l2_norm(b), eps);
  return div(dot(a, b), mul(na, nb));
}

}  // namespace

template <typename T>
Var<T> consistency_loss(Var<T> y, Var<T> y_prime, T eps) {
  require_same_shape(y.shape(), y_prime.shape(), "consistency_loss");
  require_rank(y.shape(), 3, "consistency_loss feature map");
  auto dots = sum(mul(y, y_prime), 0);
  auto ny = clamp_min(l2_norm(y, 0), eps);
  auto nyp = clamp_min(l2_norm(y_prime, 0), eps);
  return scale(mean(div(dots, mul(ny, nyp))), T(-1));
}

template <typename T>
Var<T> similarity_loss(Var<T> y, Var<T> y_prime, std::size_t alpha, T eps) {
  auto a = cross_similarity(y, y_prime, alpha);
  auto b = cross_similarity(y_prime, y, alpha);
  return scale(guarded_cosine(a, b, eps), T(-1));
}

template <typename T>
Var<T> instance_loss(Var<T> y, Var<T> y_prime, T eps) {
  require_same_shape(y.shape(), y_prime.shape(), "instance_loss");
  auto cos = guarded_cosine(global_avg_pool(y), global_avg_pool(y_prime), eps);
  return add_scalar(scale(cos, T(-2)), T(2));
}

template <typename T>
ClldLoss<T> clld_loss(Var<T> y, Var<T> y_prime, std::size_t alpha, T eps, LossSwitches switches) {
  require_same_shape(y.shape(), y_prime.shape(), "clld_loss");
  ClldLoss<T> out{};
  bool have_total = false;
  auto accumulate = [&](Var<T> term, double& slot) {
    slot = static_cast<double>(term.value()[0]);
    out.total = have_total ? add(out.total, term) : term;
    have_total = true;
  };
  if (switches.use_cons) accumulate(consistency_loss(y, y_prime, eps), out.breakdown.l_cons);
  if (switches.use_sim) accumulate(similarity_loss(y, y_prime, alpha, eps), out.breakdown.l_sim);
  if (switches.use_inst) accumulate(instance_loss(y, y_prime, eps), out.breakdown.l_inst);
  if (!have_total) throw ConfigError("clld_loss: every loss term is disabled");
  out.breakdown.l_clld = out.breakdown.l_cons + out.breakdown.l_sim + out.breakdown.l_inst;
  return out;
}

template <typename T>
LossBreakdown clld_loss_value(const Tensor<T>& y, const Tensor<T>& y_prime, std::size_t alpha, T eps,
                              LossSwitches switches) {
  Graph<T> g;
  return clld_loss(g.constant(y), g.constant(y_prime), alpha, eps, switches).breakdown;
}

#define CLLD_INSTANTIATE_LOSSES(T)                                                                       \
  template Var<T> consistency_loss(Var<T>, Var<T>, T);                                                   \
  template Var<T> similarity_loss(Var<T>, Var<T>, std::size_t, T);                                       \
  template Var<T> instance_loss(Var<T>, Var<T>, T);                                                      \
  template ClldLoss<T> clld_loss(Var<T>, Var<T>, std::size_t, T, LossSwitches);                          \
  template LossBreakdown clld_loss_value(const Tensor<T>&, const Tensor<T>&, std::size_t, T, LossSwitches);

CLLD_INSTANTIATE_LOSSES(float)
CLLD_INSTANTIATE_LOSSES(double)

}  // namespace clld
