#include "srl/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace srl {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

NdArray::NdArray(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto d : shape_)
    if (d == 0)
      throw std::invalid_argument("NdArray: zero extent in shape " +
                                  shape_to_string(shape_));
}

NdArray::NdArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (auto d : shape_)
    if (d == 0)
      throw std::invalid_argument("NdArray: zero extent in shape " +
                                  shape_to_string(shape_));
  if (shape_size(shape_) != data_.size())
    throw std::invalid_argument("NdArray: shape " + shape_to_string(shape_) +
                                " does not match " +
                                std::to_string(data_.size()) + " values");
}

NdArray NdArray::scalar(double v) { return NdArray(Shape{}, {v}); }

NdArray NdArray::vector(std::vector<double> v) {
  Shape s{v.size()};
  return NdArray(std::move(s), std::move(v));
}

NdArray NdArray::matrix(std::size_t rows, std::size_t cols,
                        std::initializer_list<double> values) {
  return NdArray(Shape{rows, cols}, std::vector<double>(values));
}

double NdArray::item() const {
  if (data_.size() != 1)
    throw std::logic_error("NdArray::item on array of shape " +
                           shape_to_string(shape_));
  return data_[0];
}

bool NdArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

NdArray NdArray::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw std::invalid_argument("reshape " + shape_to_string(shape_) + " -> " +
                                shape_to_string(shape));
  NdArray out = *this;
  out.shape_ = std::move(shape);
  return out;
}

void NdArray::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

NdArray& NdArray::operator+=(const NdArray& other) {
  if (data_.size() != other.data_.size())
    throw std::invalid_argument("NdArray += shape mismatch " +
                                shape_to_string(shape_) + " vs " +
                                shape_to_string(other.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

double max_abs_diff(const NdArray& a, const NdArray& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace srl
