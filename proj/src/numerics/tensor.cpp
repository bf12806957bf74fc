#include "tfz/numerics/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <sstream>

#include "tfz/errors.hpp"
#include "tfz/numerics/rng.hpp"

namespace tfz {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw Error(ErrorKind::ShapeMismatch, "zero extent in " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (numel(shape_) != data_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "shape " + shape_str(shape_) + " does not hold " +
                                              std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = value;
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = stddev * rng.normal();
  return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = lo + (hi - lo) * rng.uniform();
  return t;
}

std::size_t Tensor::extent(int axis) const {
  int r = static_cast<int>(shape_.size());
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw Error(ErrorKind::ShapeMismatch, "axis out of range for " + shape_str(shape_));
  return shape_[static_cast<std::size_t>(a)];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "index rank does not match " + shape_str(shape_));
  }
  std::size_t off = 0;
  std::size_t d = 0;
  for (auto i : index) {
    if (i >= shape_[d]) throw Error(ErrorKind::ShapeMismatch, "index out of range for " + shape_str(shape_));
    off = off * shape_[d] + i;
    ++d;
  }
  return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }
double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }

double Tensor::item() const {
  if (data_.size() != 1) throw Error(ErrorKind::NotScalarLoss, "item() on " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (numel(shape) != data_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  check_extents(shape);
  shape_ = std::move(shape);
  return std::move(*this);
}

bool Tensor::all_finite() const noexcept {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::ShapeMismatch, shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(double)) == 0;
}

}  // namespace tfz
