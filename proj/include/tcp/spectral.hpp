#pragma once

#include <cmath>
#include <string>

#include "tcp/ops.hpp"
#include "tcp/pooling.hpp"

namespace tcp {

template <typename T>
struct NsOutput {
  Var<T> sqrt;
  T trace = 0;
  bool degenerate = false;
};

// Coupled Newton-Schulz iteration for the matrix square root:
//   A_n = A / tr(A),  Q_0 = A_n,  R_0 = I
//   Q_k = 1/2 Q_{k-1} (3I - R_{k-1} Q_{k-1})
//   R_k = 1/2 (3I - R_{k-1} Q_{k-1}) R_{k-1}
// returning sqrt(tr(A)) * sym(Q_K). Everything after the trace scaling is
// matrix products and sums, so the backward pass is autodiff through the
// K iterations.
template <typename T>
NsOutput<T> newton_schulz(const Var<T>& a, int iterations) {
  const Matrix<T>& av = a.value();
  check_symmetric(av, 1e-4, "newton_schulz_sqrt");
  if (iterations < 0) throw ConfigError("Newton-Schulz iteration count must be >= 0");
  Tape<T>& tape = a.tape();
  const Index d = av.rows();
  const T tr = av.trace();
  if (!(tr > T(1e-12))) {
    return {tape.constant(Matrix<T>::Zero(d, d)), tr, true};
  }

  Var<T> trace_v = trace(a);
  Var<T> q = mul(a, reciprocal(trace_v));
  Var<T> r = tape.constant(Matrix<T>::Identity(d, d));
  const Var<T> three = tape.constant(Matrix<T>::Identity(d, d) * T(3));
  for (int k = 0; k < iterations; ++k) {
    Var<T> step = sub(three, matmul(r, q));
    Var<T> q_next = scale(matmul(q, step), T(0.5));
    r = scale(matmul(step, r), T(0.5));
    q = q_next;
  }
  Var<T> sym = scale(add(q, transpose(q)), T(0.5));
  return {mul(sym, sqrt(trace_v)), tr, false};
}

template <typename T>
struct SqrtResult {
  Matrix<T> sqrt_mat;
  int iterations = 0;
  T pre_trace = 0;
  // ||Q_K^2 - A_n||_F / ||A_n||_F on the trace-normalized problem.
  double residual = 0.0;
  bool degenerate = false;
};

template <typename T>
SqrtResult<T> newton_schulz_sqrt(const Matrix<T>& a, int iterations) {
  Tape<T> tape;
  NsOutput<T> out = newton_schulz(tape.constant(a), iterations);
  SqrtResult<T> res;
  res.sqrt_mat = out.sqrt.value();
  res.iterations = iterations;
  res.pre_trace = out.trace;
  res.degenerate = out.degenerate;
  if (!out.degenerate) {
    const Matrix<double> an = a.template cast<double>() / static_cast<double>(out.trace);
    const Matrix<double> qk =
        res.sqrt_mat.template cast<double>() / std::sqrt(static_cast<double>(out.trace));
    res.residual = (qk * qk - an).norm() / an.norm();
  }
  if (!res.sqrt_mat.allFinite()) throw NumericError("Newton-Schulz produced non-finite values");
  return res;
}

template <typename T>
SqrtResult<T> newton_schulz_sqrt(const CovarianceMatrix<T>& a, int iterations) {
  return newton_schulz_sqrt(a.mat, iterations);
}

struct EigenDecomposition {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // columns
  int sweeps = 0;
};

// Cyclic Jacobi eigendecomposition of a symmetric matrix, run to an
// off-diagonal Frobenius norm <= 1e-12 ||A||_F.
inline EigenDecomposition jacobi_eigen(const Eigen::MatrixXd& input, int max_sweeps = 100) {
  check_symmetric(input, 1e-4, "jacobi_eigen");
  const Index n = input.rows();
  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double target = 1e-12 * a.norm();

  auto off_norm = [&]() {
    double s = 0;
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  EigenDecomposition out;
  for (int sweep = 0;; ++sweep) {
    if (off_norm() <= target) {
      out.sweeps = sweep;
      break;
    }
    if (sweep == max_sweeps) {
      throw NumericError("Jacobi eigensolver did not converge in " + std::to_string(max_sweeps) +
                         " sweeps");
    }
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A <- J^T A J with J the (p, q) rotation.
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  out.values = a.diagonal();
  out.vectors = v;
  return out;
}

// Exact symmetric square root U diag(sqrt(max(lambda, 0))) U^T via Jacobi.
template <typename T>
Matrix<T> eig_sqrt_oracle(const Matrix<T>& a) {
  if (a.rows() > 256) throw DimensionError("eig_sqrt_oracle is limited to d <= 256");
  EigenDecomposition e = jacobi_eigen(a.template cast<double>());
  Eigen::VectorXd root = e.values.cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd s = e.vectors * root.asDiagonal() * e.vectors.transpose();
  return s.cast<T>();
}

}  // namespace tcp
