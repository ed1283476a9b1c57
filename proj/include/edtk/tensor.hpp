// Copyright 2026 The EDTK Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense numeric kernels shared by every module. All kernels are templated on
// the Eigen expression type so they accept blocks, maps and plain matrices.

#ifndef EDTK_TENSOR_HPP
#define EDTK_TENSOR_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace edtk {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;
using Vector = VectorX<double>;

/// Raised for shape or precondition violations in the numeric kernels.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a distribution cannot be renormalized (no positive mass).
class DegenerateMassError : public std::domain_error {
 public:
  DegenerateMassError() : std::domain_error("degenerate bias mass") {}
  using std::domain_error::domain_error;
};

template <typename DerivedA, typename DerivedB>
MatrixX<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedB>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " by " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  return a * b;
}

/// Row-wise softmax of `scale * m`, computed with row-max subtraction.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& m,
                                               typename Derived::Scalar scale = 1) {
  using Scalar = typename Derived::Scalar;
  if (!(scale > 0)) throw DimensionError("softmax_rows: scale must be positive");
  MatrixX<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar peak = m.row(r).maxCoeff();
    Scalar total = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const Scalar e = std::exp(scale * (m(r, c) - peak));
      out(r, c) = e;
      total += e;
    }
    out.row(r) /= total;
  }
  return out;
}

/// The normalizer N(v) = v / sum(v) for a non-negative vector with positive mass.
template <typename Derived>
RowVectorX<typename Derived::Scalar> renormalize_positive(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Scalar total = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const Scalar x = v.derived().coeff(i);
    if (!(x >= 0)) throw DegenerateMassError("degenerate bias mass: negative or NaN entry");
    total += x;
  }
  if (!(total > 0) || !std::isfinite(total)) throw DegenerateMassError();
  RowVectorX<Scalar> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = v.derived().coeff(i) / total;
  return out;
}

/// Zero-mean, unit-variance normalization followed by `gain * x + shift`.
template <typename DX, typename DG, typename DS>
RowVectorX<typename DX::Scalar> layer_norm(const Eigen::MatrixBase<DX>& x,
                                           const Eigen::MatrixBase<DG>& gain,
                                           const Eigen::MatrixBase<DS>& shift,
                                           typename DX::Scalar eps) {
  using Scalar = typename DX::Scalar;
  if (x.size() != gain.size() || x.size() != shift.size()) {
    throw DimensionError("layer_norm: length mismatch");
  }
  if (!(eps > 0)) throw DimensionError("layer_norm: eps must be positive");
  const Eigen::Index n = x.size();
  Scalar mean = 0;
  for (Eigen::Index i = 0; i < n; ++i) mean += x.derived().coeff(i);
  mean /= static_cast<Scalar>(n);
  Scalar var = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar d = x.derived().coeff(i) - mean;
    var += d * d;
  }
  var /= static_cast<Scalar>(n);
  const Scalar inv = Scalar(1) / std::sqrt(var + eps);
  RowVectorX<Scalar> out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i) = (x.derived().coeff(i) - mean) * inv * gain.derived().coeff(i) + shift.derived().coeff(i);
  }
  return out;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace edtk

#endif  // EDTK_TENSOR_HPP
