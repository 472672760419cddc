#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tsg/core/errors.hpp"

namespace tsg {

// Dense row-major numeric array. Rank is dynamic but the library only ever
// builds rank-1 vectors and rank-2 matrices. Double precision is the default
// throughout training and tests; float instantiations exist for throughput
// benchmarks.
template <typename S>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count_(shape_), S(0)) {}

  TensorT(std::vector<std::size_t> shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count_(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str());
    }
  }

  static TensorT zeros(std::vector<std::size_t> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<std::size_t> shape, S v) {
    TensorT t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static TensorT scalar(S v) { return TensorT({1}, {v}); }

  static TensorT matrix(std::size_t rows, std::size_t cols) { return TensorT({rows, cols}); }

  static TensorT vector(std::size_t n) { return TensorT({n}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // Rank-2 accessors; a rank-1 tensor behaves as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const {
    if (rank() == 2) return shape_[1];
    if (rank() == 1) return shape_[0];
    return 0;
  }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& raw() { return data_; }
  const std::vector<S>& raw() const { return data_; }

  S& at(std::size_t i) { return data_[i]; }
  S at(std::size_t i) const { return data_[i]; }
  S& at(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  S at(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const S& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  TensorT reshaped(std::vector<std::size_t> new_shape) const {
    if (count_(new_shape) != data_.size()) {
      throw ShapeError("reshape from " + shape_str() + " changes element count");
    }
    TensorT out;
    out.shape_ = std::move(new_shape);
    out.data_ = data_;
    return out;
  }

  template <typename T2>
  TensorT<T2> cast() const {
    std::vector<T2> d(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<T2>(data_[i]);
    return TensorT<T2>(shape_, std::move(d));
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
  }

  bool operator==(const TensorT& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  // Zero extents are tolerated so degenerate 0xd feature files round-trip;
  // compute ops reject them at their own shape checks.
  static std::size_t count_(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<S> data_;
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

template <typename S>
inline void require_matrix(const TensorT<S>& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected a matrix, got " + t.shape_str());
}

template <typename S>
inline void require_finite(const TensorT<S>& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite values");
}

}  // namespace tsg
