#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace interformer {

// Dense row-major matrix of doubles. Rows are the batch/token dimension,
// columns the feature dimension.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);
  Tensor(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }
  static Tensor ones(std::size_t rows, std::size_t cols) { return Tensor(rows, cols, 1.0); }
  static Tensor identity(std::size_t n);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  // Row-major reinterpretation; element count must be preserved.
  Tensor reshaped(std::size_t rows, std::size_t cols) const;
  Tensor transposed() const;

  void fill(double v);
  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Throws NumericError naming `where` if any entry is NaN or infinite.
void require_finite(const Tensor& t, const char* where);

// out (m x n) += a (m x k) * b (k x n). Every output entry accumulates over k
// in index order, so a row's result never depends on how many rows are
// multiplied alongside it.
void gemm_accumulate(const double* a, const double* b, double* out, std::size_t m,
                     std::size_t k, std::size_t n);
// out (m x n) += a (m x k) * b^T where b is n x k.
void gemm_nt_accumulate(const double* a, const double* b, double* out, std::size_t m,
                        std::size_t k, std::size_t n);
// out (m x n) += a^T * b where a is k x m and b is k x n.
void gemm_tn_accumulate(const double* a, const double* b, double* out, std::size_t m,
                        std::size_t k, std::size_t n);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace interformer
