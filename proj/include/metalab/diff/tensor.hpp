#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "metalab/errors.hpp"

namespace metalab::diff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles. Rank 0 is a scalar.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size())
      throw StructuralError("tensor shape " + shape_str(shape_) + " does not hold " + std::to_string(data_.size()) +
                            " values");
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    const auto n = v.size();
    return Tensor(Shape{n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double item() const {
    if (data_.size() != 1) throw StructuralError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor reshaped(Shape s) const { return Tensor(std::move(s), data_); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace kernels {

// C = op(A) * op(B) where op transposes when the flag is set. A, B are rank 2.
inline Tensor matmul(const Tensor& A, const Tensor& B, bool ta, bool tb) {
  if (A.rank() != 2 || B.rank() != 2)
    throw StructuralError("matmul needs rank-2 operands, got " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
  const std::size_t m = ta ? A.cols() : A.rows();
  const std::size_t k = ta ? A.rows() : A.cols();
  const std::size_t kb = tb ? B.cols() : B.rows();
  const std::size_t n = tb ? B.rows() : B.cols();
  if (k != kb)
    throw StructuralError("matmul inner dimensions differ: " + shape_str(A.shape()) + (ta ? "^T" : "") + " x " +
                          shape_str(B.shape()) + (tb ? "^T" : ""));
  Tensor C(Shape{m, n});
  const double* a = A.data().data();
  const double* b = B.data().data();
  double* c = C.data().data();
  const std::size_t lda = A.cols(), ldb = B.cols();
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * lda + p];
        if (av == 0.0) continue;
        const double* bp = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* ap = a + p * lda;
      const double* bp = b + p * ldb;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = ap[i];
        if (av == 0.0) continue;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* ai = a + i * lda;
      for (std::size_t j = 0; j < n; ++j) {
        const double* bj = b + j * ldb;
        double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
          s0 += ai[p] * bj[p];
          s1 += ai[p + 1] * bj[p + 1];
          s2 += ai[p + 2] * bj[p + 2];
          s3 += ai[p + 3] * bj[p + 3];
        }
        for (; p < k; ++p) s0 += ai[p] * bj[p];
        c[i * n + j] = (s0 + s1) + (s2 + s3);
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t p = 0; p < k; ++p) s += a[p * lda + i] * b[j * ldb + p];
        c[i * n + j] = s;
      }
  }
  return C;
}

template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor y(x.shape());
  auto in = x.data();
  auto out = y.data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return y;
}

template <class F>
Tensor zip(const Tensor& x, const Tensor& z, F f, const char* op) {
  if (x.shape() != z.shape())
    throw StructuralError(std::string(op) + ": shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(z.shape()));
  Tensor y(x.shape());
  auto a = x.data();
  auto b = z.data();
  auto out = y.data();
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return y;
}

inline Tensor log_softmax_rows(const Tensor& x) {
  if (x.rank() != 2) throw StructuralError("log_softmax expects rank 2, got " + shape_str(x.shape()));
  Tensor y(x.shape());
  const std::size_t r = x.rows(), c = x.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    double s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(x.at(i, j) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) y.at(i, j) = x.at(i, j) - lse;
  }
  return y;
}

inline Tensor softmax_rows(const Tensor& x) {
  return map(log_softmax_rows(x), [](double v) { return std::exp(v); });
}

}  // namespace kernels

/// Flattened concatenation of several tensors.
inline std::vector<double> flatten(std::span<const Tensor> ts) {
  std::vector<double> out;
  std::size_t n = 0;
  for (const auto& t : ts) n += t.size();
  out.reserve(n);
  for (const auto& t : ts) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

}  // namespace metalab::diff
