#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace srl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Storage starts on a cache line so vectorized kernels see the same
/// alignment, and therefore the same summation order, on every run.
template <class T>
struct CacheAligned {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  CacheAligned() = default;
  template <class U>
  CacheAligned(const CacheAligned<U>&) noexcept {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const CacheAligned<U>&) const noexcept { return true; }
};

using Storage = std::vector<double, CacheAligned<double>>;

/// Dense row-major array of doubles. A rank-0 array holds one value.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(Shape shape, double fill = 0.0);
  NdArray(Shape shape, std::vector<double> data);

  static NdArray scalar(double v);
  static NdArray vector(std::vector<double> v);
  static NdArray matrix(std::size_t rows, std::size_t cols,
                        std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> values() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  /// Value of a single-element array.
  double item() const;

  bool same_shape(const NdArray& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  NdArray reshaped(Shape shape) const;
  void fill(double v);
  NdArray& operator+=(const NdArray& other);

  bool operator==(const NdArray& other) const = default;

 private:
  Shape shape_;
  Storage data_;
};

double max_abs_diff(const NdArray& a, const NdArray& b);

}  // namespace srl
