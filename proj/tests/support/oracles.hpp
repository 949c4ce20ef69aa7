#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. Written with plain loops and no library ops so that agreement with
// the library means something.

#include <cstdint>
#include <random>
#include <vector>

#include "interformer/tensor.hpp"

namespace oracle {

using interformer::Tensor;

Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -2.0,
                     double hi = 2.0);

Tensor matmul(const Tensor& a, const Tensor& b);

// w0 + sum_i w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j for one row of x.
double fm_pairs(const Tensor& x, std::size_t row, const Tensor& v, const Tensor& w, double w0);

// Multi-head attention for `batch` examples, queries Tq x d and keys/values
// Tk x d per example, key validity per example, optional rope positions.
Tensor mha_loop(const Tensor& queries, const Tensor& kv, const Tensor& wq, const Tensor& wk,
                const Tensor& wv, const Tensor& wo, std::size_t heads, std::size_t batch,
                const std::vector<std::uint8_t>& key_valid, const std::vector<double>& q_pos = {},
                const std::vector<double>& k_pos = {});

// Rotary embedding of one vector split into heads of width `group`.
std::vector<double> rope_vector(std::vector<double> x, double position, std::size_t group);

// Fraction of (positive, negative) pairs ordered correctly, ties count 1/2.
double auc_pairs(const std::vector<double>& scores, const std::vector<int>& labels);
// Positive-count-weighted mean of per-user pairwise AUC over users with both
// classes, users in ascending id order.
double gauc_pairs(const std::vector<double>& scores, const std::vector<int>& labels,
                  const std::vector<std::int64_t>& users);
double ne_direct(const std::vector<double>& probs, const std::vector<int>& labels, double ctr);

// x0 * (xl W + b) + xl, elementwise over rows.
Tensor dcn_cross(const Tensor& x0, const Tensor& xl, const Tensor& w, const Tensor& b);

// Token mixing: out block b = mix^T * (block b of x).
Tensor lce(const Tensor& x, const Tensor& mix, std::size_t batch);

// One scalar Adam update with bias correction; returns the new parameter.
struct AdamState {
  double m = 0, v = 0;
  std::uint64_t t = 0;
};
double adam_scalar(double param, double grad, AdamState& s, double lr, double beta1 = 0.9,
                   double beta2 = 0.999, double eps = 1e-8);

}  // namespace oracle
