#include "clld/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace clld {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i] == 0) {
      throw DimensionError("shape axis " + std::to_string(i) + " has zero extent");
    }
  }
}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) out << ',';
    out << dims_[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
  }
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (!on) grad_.reset();
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (!grad_) grad_.emplace(data_.size(), T(0));
  return *grad_;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!grad_) return {};
  return *grad_;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), T(0));
}

template <typename T>
void Tensor<T>::accumulate_grad(std::span<const T> delta) {
  if (!requires_grad_) return;
  if (delta.size() != data_.size()) {
    throw DimensionError("gradient length " + std::to_string(delta.size()) +
                         " does not match tensor shape " + shape_.str());
  }
  auto g = grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != data_.size()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(std::move(shape), data_);
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (a.rank() != b.rank()) {
    throw DimensionError(what + ": rank mismatch " + a.str() + " vs " + b.str());
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (a[i] != b[i]) {
      throw DimensionError(what + ": axis " + std::to_string(i) + " differs (" +
                           std::to_string(a[i]) + " vs " + std::to_string(b[i]) + ")");
    }
  }
}

void require_rank(const Shape& shape, std::size_t rank, const std::string& what) {
  if (shape.rank() != rank) {
    throw DimensionError(what + ": expected rank " + std::to_string(rank) + ", got " + shape.str());
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace clld
