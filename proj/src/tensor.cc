// Copyright 2026 The FewUser Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fewuser/tensor.h"

#include <cmath>
#include <stdexcept>

#include "fewuser/simd/kernels.h"

namespace fewuser {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: data size does not match shape");
  }
}

Matrix Matrix::FromRows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("Matrix: ragged rows");
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::RowVector(std::span<const double> values) {
  return Matrix(1, values.size(),
                std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::Identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::Fill(double v) {
  for (double& x : data_) x = v;
}

bool Matrix::AllFinite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Matrix::ShapeString() const {
  return "[" + std::to_string(rows_) + " x " + std::to_string(cols_) + "]";
}

namespace {

[[noreturn]] void ShapeError(const char* op, const Matrix& a, const Matrix& b,
                             const Matrix& out) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              a.ShapeString() + ", " + b.ShapeString() +
                              " -> " + out.ShapeString());
}

}  // namespace

void GemmAccumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.rows() || out.rows() != a.rows() ||
      out.cols() != b.cols()) {
    ShapeError("Gemm", a, b, out);
  }
  simd::Active().gemm_nn(a.data(), b.data(), out.data(), a.rows(), a.cols(),
                         b.cols());
}

void GemmNTAccumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.cols() || out.rows() != a.rows() ||
      out.cols() != b.rows()) {
    ShapeError("GemmNT", a, b, out);
  }
  simd::Active().gemm_nt(a.data(), b.data(), out.data(), a.rows(), a.cols(),
                         b.rows());
}

void GemmTNAccumulate(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() ||
      out.cols() != b.cols()) {
    ShapeError("GemmTN", a, b, out);
  }
  simd::Active().gemm_tn(a.data(), b.data(), out.data(), a.cols(), a.rows(),
                         b.cols());
}

Matrix MatMul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  GemmAccumulate(a, b, out);
  return out;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("Dot: size mismatch");
  return simd::Active().dot(a.data(), b.data(), a.size());
}

void Axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("Axpy: size mismatch");
  simd::Active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace fewuser
