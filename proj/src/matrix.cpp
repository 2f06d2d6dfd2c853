#include "syntempo/matrix.hpp"

#include <cassert>
#include <cstring>

namespace syntempo {

void matmul(const Matrix& lhs, const Matrix& rhs, Matrix& out,
            bool accumulate) {
  assert(lhs.cols == rhs.rows);
  out.rows = lhs.rows;
  out.cols = rhs.cols;
  out.a.resize(static_cast<std::size_t>(out.rows) * out.cols);
  if (!accumulate) {
    std::memset(out.a.data(), 0, out.a.size() * sizeof(double));
  }
  // ikj order: the inner loop streams both rhs and out rows.
  for (int i = 0; i < lhs.rows; ++i) {
    const double* lrow = lhs.row(i);
    double* orow = out.row(i);
    for (int k = 0; k < lhs.cols; ++k) {
      const double l = lrow[k];
      if (l == 0.0) continue;
      const double* rrow = rhs.row(k);
      for (int j = 0; j < rhs.cols; ++j) {
        orow[j] += l * rrow[j];
      }
    }
  }
}

void matmul_nt(const Matrix& lhs, const Matrix& rhs, Matrix& out,
               bool accumulate) {
  assert(lhs.cols == rhs.cols);
  out.rows = lhs.rows;
  out.cols = rhs.rows;
  out.a.resize(static_cast<std::size_t>(out.rows) * out.cols);
  for (int i = 0; i < lhs.rows; ++i) {
    const double* lrow = lhs.row(i);
    double* orow = out.row(i);
    for (int j = 0; j < rhs.rows; ++j) {
      const double* rrow = rhs.row(j);
      double acc = accumulate ? orow[j] : 0.0;
      for (int k = 0; k < lhs.cols; ++k) {
        acc += lrow[k] * rrow[k];
      }
      orow[j] = acc;
    }
  }
}

void matmul_tn(const Matrix& lhs, const Matrix& rhs, Matrix& out,
               bool accumulate) {
  assert(lhs.rows == rhs.rows);
  out.rows = lhs.cols;
  out.cols = rhs.cols;
  out.a.resize(static_cast<std::size_t>(out.rows) * out.cols);
  if (!accumulate) {
    std::memset(out.a.data(), 0, out.a.size() * sizeof(double));
  }
  for (int k = 0; k < lhs.rows; ++k) {
    const double* lrow = lhs.row(k);
    const double* rrow = rhs.row(k);
    for (int i = 0; i < lhs.cols; ++i) {
      const double l = lrow[i];
      if (l == 0.0) continue;
      double* orow = out.row(i);
      for (int j = 0; j < rhs.cols; ++j) {
        orow[j] += l * rrow[j];
      }
    }
  }
}

}  // namespace syntempo
