#include "celif/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "celif/error.hpp"

namespace celif {

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 3)
    throw DimensionError("tensor rank must be 1..3, got " + std::to_string(shape.size()));
  for (auto extent : shape)
    if (extent == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape));
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw DimensionError(std::string(op) + ": result contains non-finite values");
}

}  // namespace

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_))
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  return shape_[axis];
}

std::span<Real> Tensor::row(std::size_t i) {
  const std::size_t stride = data_.size() / shape_[0];
  return {data_.data() + i * stride, stride};
}

std::span<const Real> Tensor::row(std::size_t i) const {
  const std::size_t stride = data_.size() / shape_[0];
  return {data_.data() + i * stride, stride};
}

std::span<Real> Tensor::row(std::size_t i, std::size_t j) {
  return {data_.data() + (i * shape_[1] + j) * shape_[2], shape_[2]};
}

std::span<const Real> Tensor::row(std::size_t i, std::size_t j) const {
  return {data_.data() + (i * shape_[1] + j) * shape_[2], shape_[2]};
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real x) { return std::isfinite(x); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul needs rank-2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul inner dimensions differ: " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  Tensor out({m, n});
  // i-p-j order: contiguous inner loop over b's rows, fixed summation order.
  for (std::size_t i = 0; i < m; ++i) {
    auto dst = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = a.at(i, p);
      const auto src = b.row(p);
      for (std::size_t j = 0; j < n; ++j) dst[j] += aip * src[j];
    }
  }
  require_finite(out, "matmul");
  return out;
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  auto apply = [op](Real x, Real y) {
    switch (op) {
      case ElementwiseOp::Add: return x + y;
      case ElementwiseOp::Sub: return x - y;
      case ElementwiseOp::Mul: return x * y;
    }
    return x;
  };

  Tensor out(a.shape());
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(a[i], b[i]);
  } else if (b.rank() == 1 && a.rank() >= 2 && b.dim(0) == a.shape().back()) {
    const std::size_t width = b.dim(0);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(a[i], b[i % width]);
  } else if (b.rank() == 1 && a.rank() >= 2 && b.dim(0) == a.dim(0)) {
    const std::size_t stride = a.size() / a.dim(0);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply(a[i], b[i / stride]);
  } else {
    throw DimensionError("elementwise shapes incompatible: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  require_finite(out, "elementwise");
  return out;
}

}  // namespace celif
