#pragma once

#include <cstddef>
#include <vector>

namespace syntempo {

// Dense row-major matrix of doubles. Kept deliberately minimal; all model
// math is written against raw row pointers.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const {
    return a.data() + static_cast<std::size_t>(r) * cols;
  }
  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return a[static_cast<std::size_t>(r) * cols + c];
  }

  bool operator==(const Matrix& other) const = default;
};

// out[r,c] = sum_k lhs[r,k] * rhs[k,c]; accumulates when accumulate=true.
void matmul(const Matrix& lhs, const Matrix& rhs, Matrix& out,
            bool accumulate = false);

// out[r,c] = sum_k lhs[r,k] * rhs[c,k] (rhs used transposed).
void matmul_nt(const Matrix& lhs, const Matrix& rhs, Matrix& out,
               bool accumulate = false);

// out[r,c] = sum_k lhs[k,r] * rhs[k,c] (lhs used transposed).
void matmul_tn(const Matrix& lhs, const Matrix& rhs, Matrix& out,
               bool accumulate = false);

}  // namespace syntempo
