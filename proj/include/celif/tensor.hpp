#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace celif {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of rank 1 to 3. A default-constructed tensor is
/// empty (no shape, no data) and stands in for "absent".
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0);
  Tensor(Shape shape, std::vector<Real> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real* raw() { return data_.data(); }
  const Real* raw() const { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  Real at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  Real& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  Real at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Contiguous sub-block at index i of the leading axis.
  std::span<Real> row(std::size_t i);
  std::span<const Real> row(std::size_t i) const;
  // Innermost vector [i][j][:] of a rank-3 tensor.
  std::span<Real> row(std::size_t i, std::size_t j);
  std::span<const Real> row(std::size_t i, std::size_t j) const;

  void fill(Real value);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

Tensor matmul(const Tensor& a, const Tensor& b);

enum class ElementwiseOp { Add, Sub, Mul };

/// Per-element a (op) b. Either the shapes agree, or b is a vector whose
/// length matches the last axis of a (tiled over rows) or, failing that,
/// the first axis of a (tiled over columns).
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);

}  // namespace celif
