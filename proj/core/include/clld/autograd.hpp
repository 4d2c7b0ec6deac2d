#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "clld/tensor.hpp"

namespace clld {

enum class OpKind {
  kLeaf,
  kConstant,
  kConv2d,
  kAddChannelBias,
  kGroupNorm,
  kRelu,
  kSigmoid,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kClampMin,
  kSum,
  kSumAxis,
  kMean,
  kL2Norm,
  kL2NormAxis,
  kGlobalAvgPool,
  kReshape,
  kUpsampleBilinear,
  kBceWithLogits,
  kCrossSimilarity,
};

std::string_view op_name(OpKind kind);

template <typename T>
class Graph;

// Handle to a node recorded on a Graph. Cheap to copy; valid while the
// graph is alive and not cleared.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

// View handed to an op's backward function.
template <typename T>
class BackwardContext {
 public:
  BackwardContext(Graph<T>& graph, std::size_t node) : graph_(graph), node_(node) {}

  std::span<const T> out_grad() const;
  const Tensor<T>& output() const;
  const Tensor<T>& input(std::size_t i) const;
  // Gradient buffer of input i, or an empty span when that input is not
  // differentiable.
  std::span<T> input_grad(std::size_t i);

 private:
  Graph<T>& graph_;
  std::size_t node_;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the
// tape is topologically sorted by construction; backward() walks it
// once in reverse.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(BackwardContext<T>&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Binds an external tensor. It must outlive the graph. On backward(),
  // the gradient is added to t.grad() when t.requires_grad() is set.
  Var<T> leaf(Tensor<T>& t);
  // Binds an external tensor read-only; never differentiated.
  Var<T> bind(const Tensor<T>& t);
  // Owns a copy of `t`; never differentiated.
  Var<T> constant(Tensor<T> t);

  Var<T> record(OpKind kind, std::vector<Var<T>> inputs, Tensor<T> value, BackwardFn backward);

  const Tensor<T>& value(Var<T> v) const { return value(v.id); }
  // Node-local gradient from the last backward(); empty if none.
  std::span<const T> grad(Var<T> v) const;
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).needs_grad; }
  OpKind kind(Var<T> v) const { return nodes_.at(v.id).kind; }
  const std::vector<std::size_t>& inputs(Var<T> v) const { return nodes_.at(v.id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be a scalar
  // reachable from at least one differentiable leaf. With
  // `accumulate_into_leaves` false, leaf gradients stay node-local
  // (read them with grad()).
  void backward(Var<T> loss, bool accumulate_into_leaves = true);

  // Number of node backward functions run by the last backward().
  std::size_t last_backward_visits() const { return last_visits_; }

  void clear();

 private:
  friend class BackwardContext<T>;

  struct Node {
    OpKind kind = OpKind::kConstant;
    std::vector<std::size_t> inputs;
    Tensor<T> owned;
    const Tensor<T>* bound = nullptr;
    Tensor<T>* source = nullptr;
    bool needs_grad = false;
    std::vector<T> grad;
    BackwardFn backward;
  };

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.bound ? *n.bound : n.owned;
  }
  std::span<T> grad_buffer(std::size_t id);

  std::vector<Node> nodes_;
  std::size_t last_visits_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(*this);
}

// --- differentiable operations -------------------------------------------
//
// Unless stated otherwise, binary ops require identical shapes and feature
// maps are laid out [C,H,W].

// Cross-correlation of x[Cin,H,W] with kernel[Cout,Cin,k,k]. Output side is
// floor((H + 2*padding - k) / stride) + 1.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> kernel, std::size_t stride, std::size_t padding);

template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias);

// Normalizes each group of `group_size` consecutive channels over the
// group's channels and all spatial positions, then applies a per-channel
// affine transform.
template <typename T>
Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, std::size_t group_size, T eps = T(1e-5));

// relu'(0) = 0.
template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> div(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
template <typename T>
Var<T> add_scalar(Var<T> x, T offset);
// max(x, floor); the gradient is passed only where x > floor.
template <typename T>
Var<T> clamp_min(Var<T> x, T floor);

// Full reductions yield shape [1].
template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);
// Removes `axis`; a rank-1 input reduces to [1].
template <typename T>
Var<T> sum(Var<T> x, std::size_t axis);

// Euclidean norm. The gradient at an all-zero input is taken as zero.
template <typename T>
Var<T> l2_norm(Var<T> x);
template <typename T>
Var<T> l2_norm(Var<T> x, std::size_t axis);

template <typename T>
Var<T> dot(Var<T> a, Var<T> b) {
  return sum(mul(a, b));
}

// [C,H,W] -> [C]
template <typename T>
Var<T> global_avg_pool(Var<T> x);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

// Integer-factor bilinear upsampling with half-pixel centers.
template <typename T>
Var<T> upsample_bilinear(Var<T> x, std::size_t factor);

// Mean of the per-element binary cross-entropy between sigmoid(logits) and
// `targets` (values in [0,1]); positives are weighted by `pos_weight`.
template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& targets, T pos_weight = T(1));

}  // namespace clld
