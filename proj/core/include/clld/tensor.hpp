#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clld/errors.hpp"

namespace clld {

// Extents of a dense row-major tensor. Every extent is positive.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::size_t numel() const;
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

// Dense n-dimensional array with an optional gradient buffer.
//
// Tensors are plain values; automatic differentiation is recorded by a
// Graph (see autograd.hpp), which accumulates into grad() of any tensor
// bound as a leaf with requires_grad set.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t rank() const { return shape_.rank(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Element access for rank-3 [C,H,W] tensors.
  T& at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  const T& at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on);

  bool has_grad() const { return grad_.has_value(); }
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();
  // No-op unless requires_grad() is set.
  void accumulate_grad(std::span<const T> delta);

  // Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<T> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<T>> grad_;
};

// Throws DimensionError naming `what` unless the shapes match.
void require_same_shape(const Shape& a, const Shape& b, const std::string& what);

// Throws DimensionError unless `shape` has the given rank.
void require_rank(const Shape& shape, std::size_t rank, const std::string& what);

}  // namespace clld
