#include "clld/autograd.hpp"

#include <algorithm>

namespace clld {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kAddChannelBias: return "add_channel_bias";
    case OpKind::kGroupNorm: return "group_norm";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kClampMin: return "clamp_min";
    case OpKind::kSum: return "sum";
    case OpKind::kSumAxis: return "sum_axis";
    case OpKind::kMean: return "mean";
    case OpKind::kL2Norm: return "l2_norm";
    case OpKind::kL2NormAxis: return "l2_norm_axis";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kReshape: return "reshape";
    case OpKind::kUpsampleBilinear: return "upsample_bilinear";
    case OpKind::kBceWithLogits: return "bce_with_logits";
    case OpKind::kCrossSimilarity: return "cross_similarity";
  }
  return "unknown";
}

template <typename T>
std::span<const T> BackwardContext<T>::out_grad() const {
  return graph_.nodes_[node_].grad;
}

template <typename T>
const Tensor<T>& BackwardContext<T>::output() const {
  return graph_.value(node_);
}

template <typename T>
const Tensor<T>& BackwardContext<T>::input(std::size_t i) const {
  return graph_.value(graph_.nodes_[node_].inputs.at(i));
}

template <typename T>
std::span<T> BackwardContext<T>::input_grad(std::size_t i) {
  const std::size_t id = graph_.nodes_[node_].inputs.at(i);
  if (!graph_.nodes_[id].needs_grad) return {};
  return graph_.grad_buffer(id);
}

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T>& t) {
  Node n;
  n.kind = OpKind::kLeaf;
  n.bound = &t;
  n.source = &t;
  n.needs_grad = t.requires_grad();
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::bind(const Tensor<T>& t) {
  Node n;
  n.kind = OpKind::kConstant;
  n.bound = &t;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> t) {
  Node n;
  n.kind = OpKind::kConstant;
  n.owned = std::move(t);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::record(OpKind kind, std::vector<Var<T>> inputs, Tensor<T> value, BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.owned = std::move(value);
  for (const auto& in : inputs) {
    if (in.graph != this) throw ContractError(std::string(op_name(kind)) + ": input belongs to another graph");
    n.inputs.push_back(in.id);
    n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
std::span<const T> Graph<T>::grad(Var<T> v) const {
  return nodes_.at(v.id).grad;
}

template <typename T>
std::span<T> Graph<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).size(), T(0));
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> loss, bool accumulate_into_leaves) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + value(loss.id).shape().str());
  }
  if (!nodes_[loss.id].needs_grad) {
    throw ContractError("backward: loss is not reachable from any differentiable tensor");
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(loss.id)[0] = T(1);

  last_visits_ = 0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.kind == OpKind::kLeaf) {
      if (accumulate_into_leaves && n.source) n.source->accumulate_grad(n.grad);
      continue;
    }
    BackwardContext<T> ctx(*this, id);
    n.backward(ctx);
    ++last_visits_;
  }
}

template <typename T>
void Graph<T>::clear() {
  nodes_.clear();
  last_visits_ = 0;
}

template class BackwardContext<float>;
template class BackwardContext<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace clld
