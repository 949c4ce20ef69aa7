#include "interformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <vector>
#include <fmt/format.h>

#include "interformer/errors.hpp"

namespace interformer {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError(fmt::format("tensor {}x{} needs {} values, got {}", rows_, cols_,
                                     rows_ * cols_, data_.size()));
  }
  require_finite(*this, "tensor construction");
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged tensor literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(*this, "tensor construction");
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::reshaped(std::size_t rows, std::size_t cols) const {
  if (rows * cols != data_.size()) {
    throw DimensionError(
        fmt::format("cannot reshape {} to {}x{}", shape_string(), rows, cols));
  }
  Tensor out = *this;
  out.rows_ = rows;
  out.cols_ = cols;
  return out;
}

Tensor Tensor::transposed() const {
  Tensor out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NumericError(fmt::format("non-finite value in {}", where));
}

namespace {

// Rows of `out` updated together, so each streamed row of b is reused while
// it sits in L1.
constexpr std::size_t kRowBlock = 8;

}  // namespace

void gemm_accumulate(const double* __restrict a, const double* __restrict b,
                     double* __restrict out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
    const std::size_t i1 = std::min(m, i0 + kRowBlock);
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      for (std::size_t i = i0; i < i1; ++i) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        double* orow = out + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
}

void gemm_nt_accumulate(const double* __restrict a, const double* __restrict b,
                        double* __restrict out, std::size_t m, std::size_t k, std::size_t n) {
  // A serial dot product per entry is bound by add latency; transposing b
  // lets the row-update kernel vectorize across n with the same k order.
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_accumulate(a, bt.data(), out, m, k, n);
}

void gemm_tn_accumulate(const double* __restrict a, const double* __restrict b,
                        double* __restrict out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
    const std::size_t i1 = std::min(m, i0 + kRowBlock);
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      const double* arow = a + p * m;
      for (std::size_t i = i0; i < i1; ++i) {
        const double av = arow[i];
        if (av == 0.0) continue;
        double* orow = out + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(
        fmt::format("shape mismatch {} vs {}", a.shape_string(), b.shape_string()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace interformer
