// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lttd/errors.hpp"

namespace lttd {

// Dense row-major tensors of 64-bit floats. A matrix is a 2-mode tensor,
// a vector a 1-mode tensor and a scalar a 0-mode tensor with one element.
// All kernels are deterministic: fixed loop order, fixed reduction order.

class Shape {
 public:
  Shape() = default;  // scalar

  Shape(std::initializer_list<std::size_t> dims)
      : Shape(std::vector<std::size_t>(dims)) {}

  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    std::size_t count = 1;
    for (std::size_t e : dims_) {
      if (e == 0) throw shape_error("Shape: zero extent");
      if (count > kMaxElements / e)
        throw shape_error("Shape: element count exceeds 2^40");
      count *= e;
    }
    count_ = count;
  }

  std::size_t ndim() const { return dims_.size(); }
  std::size_t extent(std::size_t mode) const { return dims_[mode]; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t element_count() const { return count_; }

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return !(*this == other); }

  std::string str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims_.size(); ++i)
      os << (i ? "," : "") << dims_[i];
    os << ')';
    return os.str();
  }

  static constexpr std::size_t kMaxElements = std::size_t{1} << 40;

 private:
  std::vector<std::size_t> dims_;
  std::size_t count_ = 1;
};

class DenseTensor {
 public:
  DenseTensor() : shape_(), data_(1, 0.0) {}  // scalar zero

  /// Zero-filled tensor of the given shape.
  explicit DenseTensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_.element_count(), 0.0) {}

  /// Tensor from explicit data. Rejects length mismatches and
  /// non-finite entries; this is the checked entry point for user data.
  DenseTensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.element_count())
      throw shape_error("DenseTensor: data length " +
                        std::to_string(data_.size()) + " != element count " +
                        std::to_string(shape_.element_count()));
    for (double v : data_)
      if (!std::isfinite(v))
        throw shape_error("DenseTensor: non-finite entry");
  }

  static DenseTensor scalar(double v) { return DenseTensor(Shape{}, {v}); }

  static DenseTensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return DenseTensor(std::move(s), std::move(v));
  }

  static DenseTensor matrix(std::size_t rows, std::size_t cols,
                            std::vector<double> v) {
    return DenseTensor(Shape{rows, cols}, std::move(v));
  }

  static DenseTensor identity(std::size_t n) {
    DenseTensor t{Shape{n, n}};
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.ndim(); }
  std::size_t extent(std::size_t mode) const { return shape_.extent(mode); }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  /// Multi-index access, row-major.
  template <typename... Ix>
  double& operator()(Ix... ix) {
    return data_[offset({static_cast<std::size_t>(ix)...})];
  }
  template <typename... Ix>
  double operator()(Ix... ix) const {
    return data_[offset({static_cast<std::size_t>(ix)...})];
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0;
    std::size_t mode = 0;
    for (std::size_t i : idx) off = off * shape_.extent(mode++) + i;
    return off;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const DenseTensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw shape_error(msg);
}

}  // namespace detail

/// Outer product of two or more vectors. Result shape is the
/// concatenation of the factor lengths.
inline DenseTensor outer_product(std::span<const DenseTensor> factors) {
  detail::require(factors.size() >= 2, "outer_product: need >= 2 factors");
  std::vector<std::size_t> dims;
  for (const DenseTensor& f : factors) {
    detail::require(f.ndim() == 1, "outer_product: factor is not a vector");
    dims.push_back(f.extent(0));
  }
  DenseTensor out{Shape(dims)};
  const std::size_t total = out.size();
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    double prod = 1.0;
    for (std::size_t f = factors.size(); f-- > 0;) {
      prod *= factors[f][rem % dims[f]];
      rem /= dims[f];
    }
    out[flat] = prod;
  }
  return out;
}

inline DenseTensor outer_product(std::initializer_list<DenseTensor> factors) {
  return outer_product(std::span<const DenseTensor>(factors.begin(),
                                                    factors.size()));
}

/// Generalized inner product: contracts the leading modes of `t` against
/// the given vectors, leaving the trailing modes free.
///   out[J] = sum_I t[I, J] * prod_i v_i[I_i]
/// Contracting all modes yields a 0-mode (scalar) tensor.
inline DenseTensor contract_leading(const DenseTensor& t,
                                    std::span<const DenseTensor> vectors) {
  detail::require(vectors.size() <= t.ndim(),
                  "contract_leading: more vectors than modes");
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    detail::require(vectors[i].ndim() == 1,
                    "contract_leading: operand is not a vector");
    detail::require(vectors[i].extent(0) == t.extent(i),
                    "contract_leading: vector " + std::to_string(i) +
                        " length " + std::to_string(vectors[i].extent(0)) +
                        " != extent " + std::to_string(t.extent(i)));
  }

  // Fold one leading mode at a time: out[rest] = sum_i v[i] * cur[i, rest].
  std::vector<double> cur(t.data(), t.data() + t.size());
  std::vector<std::size_t> dims = t.shape().dims();
  for (std::size_t m = 0; m < vectors.size(); ++m) {
    const DenseTensor& v = vectors[m];
    const std::size_t lead = dims[m];
    std::size_t rest = 1;
    for (std::size_t j = m + 1; j < dims.size(); ++j) rest *= dims[j];
    std::vector<double> next(rest, 0.0);
    for (std::size_t i = 0; i < lead; ++i) {
      const double w = v[i];
      const double* row = cur.data() + i * rest;
      for (std::size_t r = 0; r < rest; ++r) next[r] += w * row[r];
    }
    cur = std::move(next);
  }
  std::vector<std::size_t> out_dims(dims.begin() + vectors.size(), dims.end());
  DenseTensor out{Shape(out_dims)};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cur[i];
  return out;
}

inline DenseTensor contract_leading(const DenseTensor& t,
                                    std::initializer_list<DenseTensor> vs) {
  return contract_leading(t, std::span<const DenseTensor>(vs.begin(),
                                                          vs.size()));
}

/// Row-major matrix product of two 2-mode tensors.
inline DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
  detail::require(a.ndim() == 2 && b.ndim() == 2, "matmul: need 2-mode inputs");
  detail::require(a.extent(1) == b.extent(0),
                  "matmul: inner extents " + std::to_string(a.extent(1)) +
                      " and " + std::to_string(b.extent(0)) + " disagree");
  const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(1);
  DenseTensor out{Shape{n, m}};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b.data() + p * m;
      double* orow = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

/// Elementwise product of equally sized vectors.
inline DenseTensor hadamard(std::span<const DenseTensor> vectors) {
  detail::require(!vectors.empty(), "hadamard: need >= 1 vector");
  const std::size_t n = vectors[0].extent(0);
  for (const DenseTensor& v : vectors) {
    detail::require(v.ndim() == 1, "hadamard: operand is not a vector");
    detail::require(v.extent(0) == n, "hadamard: length mismatch");
  }
  DenseTensor out{Shape{n}};
  for (std::size_t i = 0; i < n; ++i) {
    double p = 1.0;
    for (const DenseTensor& v : vectors) p *= v[i];
    out[i] = p;
  }
  return out;
}

inline DenseTensor hadamard(std::initializer_list<DenseTensor> vs) {
  return hadamard(std::span<const DenseTensor>(vs.begin(), vs.size()));
}

/// Row-major flattening of a matrix into a vector.
inline DenseTensor vectorize(const DenseTensor& m) {
  detail::require(m.ndim() == 2, "vectorize: need a 2-mode input");
  DenseTensor out{Shape{m.size()}};
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i];
  return out;
}

/// Same data, new shape. Element count must be preserved; the row-major
/// byte order is unchanged, so reshape(vectorize(m), shape(m)) == m exactly.
inline DenseTensor reshape(const DenseTensor& t, Shape shape) {
  detail::require(shape.element_count() == t.size(),
                  "reshape: element count mismatch");
  DenseTensor out{std::move(shape)};
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i];
  return out;
}

}  // namespace lttd
