#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tcp/tape.hpp"

// Differentiable primitives. Every function records one node on the tape of
// its operands; gradient rules live next to the forward computation.
namespace tcp {

namespace detail {

// Shape of the result of an elementwise op, or throws. Supported patterns:
// equal shapes, a 1xC row against NxC, and a 1x1 scalar against anything.
inline std::pair<Index, Index> broadcast_shape(Index ar, Index ac, Index br, Index bc) {
  if (ar == br && ac == bc) return {ar, ac};
  if (br == 1 && bc == 1) return {ar, ac};
  if (ar == 1 && ac == 1) return {br, bc};
  if (br == 1 && bc == ac) return {ar, ac};
  if (ar == 1 && ac == bc) return {br, bc};
  throw DimensionError("incompatible broadcast shapes " + shape_string(ar, ac) + " and " +
                       shape_string(br, bc));
}

template <typename T>
Matrix<T> expand(const Matrix<T>& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.size() == 1) return Matrix<T>::Constant(rows, cols, m(0, 0));
  return m.replicate(rows, 1);
}

// Sums a broadcast gradient back down to the operand's shape.
template <typename T>
Matrix<T> reduce_to(const Matrix<T>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix<T>::Constant(1, 1, g.sum());
  return g.colwise().sum();
}

template <typename T>
Tape<T>& common_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw IntegrityError("operands recorded on different tapes");
  return a.tape();
}

}  // namespace detail

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::common_tape(a, b);
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul inner dimensions differ: " + shape_string(av.rows(), av.cols()) +
                         " x " + shape_string(bv.rows(), bv.cols()));
  }
  Matrix<T> out = av * bv;
  return tape.record(std::move(out), {a, b},
                     [a, b](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                       if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
                       if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
                     });
}

// a^T a
template <typename T>
Var<T> gram(const Var<T>& a) {
  const Matrix<T>& av = a.value();
  Matrix<T> out = av.transpose() * av;
  return a.tape().record(std::move(out), {a},
                         [a](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                           t.accumulate(a, t.value(a) * (g + g.transpose()));
                         });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  Matrix<T> out = a.value().transpose();
  return a.tape().record(std::move(out), {a},
                         [a](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                           t.accumulate(a, g.transpose());
                         });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::common_tape(a, b);
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  auto [r, c] = detail::broadcast_shape(av.rows(), av.cols(), bv.rows(), bv.cols());
  Matrix<T> out = detail::expand(av, r, c) + detail::expand(bv, r, c);
  return tape.record(std::move(out), {a, b},
                     [a, b](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                       const Matrix<T>& av = t.value(a);
                       const Matrix<T>& bv = t.value(b);
                       t.accumulate(a, detail::reduce_to(g, av.rows(), av.cols()));
                       t.accumulate(b, detail::reduce_to(g, bv.rows(), bv.cols()));
                     });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::common_tape(a, b);
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  auto [r, c] = detail::broadcast_shape(av.rows(), av.cols(), bv.rows(), bv.cols());
  Matrix<T> out = detail::expand(av, r, c) - detail::expand(bv, r, c);
  return tape.record(std::move(out), {a, b},
                     [a, b](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                       const Matrix<T>& av = t.value(a);
                       const Matrix<T>& bv = t.value(b);
                       t.accumulate(a, detail::reduce_to(g, av.rows(), av.cols()));
                       t.accumulate(b, -detail::reduce_to(g, bv.rows(), bv.cols()));
                     });
}

// Elementwise product; broadcasting as in add().
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = detail::common_tape(a, b);
  const Matrix<T>& av = a.value();
  const Matrix<T>& bv = b.value();
  auto [r, c] = detail::broadcast_shape(av.rows(), av.cols(), bv.rows(), bv.cols());
  Matrix<T> out = detail::expand(av, r, c).cwiseProduct(detail::expand(bv, r, c));
  return tape.record(std::move(out), {a, b},
                     [a, b](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                       const Matrix<T>& av = t.value(a);
                       const Matrix<T>& bv = t.value(b);
                       if (t.requires_grad(a)) {
                         Matrix<T> ga = g.cwiseProduct(detail::expand(bv, g.rows(), g.cols()));
                         t.accumulate(a, detail::reduce_to(ga, av.rows(), av.cols()));
                       }
                       if (t.requires_grad(b)) {
                         Matrix<T> gb = g.cwiseProduct(detail::expand(av, g.rows(), g.cols()));
                         t.accumulate(b, detail::reduce_to(gb, bv.rows(), bv.cols()));
                       }
                     });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Matrix<T> out = a.value() * s;
  return a.tape().record(std::move(out), {a},
                         [a, s](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                           t.accumulate(a, g * s);
                         });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Matrix<T> out = a.value().unaryExpr([](T x) {
    // Split by sign so exp() never overflows.
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    T e = std::exp(x);
    return e / (T(1) + e);
  });
  return a.tape().record(std::move(out), {a},
                         [a](Tape<T>& t, const Matrix<T>& g, const Matrix<T>& y) {
                           t.accumulate(a, g.cwiseProduct(y.cwiseProduct(
                                               (Matrix<T>::Ones(y.rows(), y.cols()) - y))));
                         });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Matrix<T> out = a.value().cwiseMax(T(0));
  return a.tape().record(std::move(out), {a},
                         [a](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                           const Matrix<T>& x = t.value(a);
                           t.accumulate(a, (x.array() > T(0)).select(g.array(), T(0)).matrix());
                         });
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
  if ((a.value().array() < T(0)).any()) throw NumericError("sqrt of a negative value");
  Matrix<T> out = a.value().cwiseSqrt();
  return a.tape().record(std::move(out), {a},
                         [a](Tape<T>& t, const Matrix<T>& g, const Matrix<T>& y) {
                           t.accumulate(a, (g.array() / (T(2) * y.array())).matrix());
                         });
}

template <typename T>
Var<T> reciprocal(const Var<T>& a) {
  if ((a.value().array() == T(0)).any()) throw NumericError("reciprocal of zero");
  Matrix<T> out = a.value().cwiseInverse();
  return a.tape().record(std::move(out), {a},
                         [a](Tape<T>& t, const Matrix<T>& g, const Matrix<T>& y) {
                           t.accumulate(a, (-g.array() * y.array().square()).matrix());
                         });
}

// Row-wise softmax with per-row max subtraction.
template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
  const Matrix<T>& x = a.value();
  if (!x.allFinite()) throw NumericError("softmax_rows on non-finite input");
  Matrix<T> out = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  out = out.array().colwise() / out.rowwise().sum().array();
  return a.tape().record(std::move(out), {a},
                         [a](Tape<T>& t, const Matrix<T>& g, const Matrix<T>& y) {
                           // dx = y * (g - rowsum(g * y))
                           Matrix<T> inner = g.cwiseProduct(y).rowwise().sum();
                           Matrix<T> dx = y.array() * (g.colwise() - inner.col(0)).array();
                           t.accumulate(a, dx);
                         });
}

// Mean over axis 0 (result 1xC) or axis 1 (result Nx1).
template <typename T>
Var<T> mean_over(const Var<T>& a, int axis) {
  const Matrix<T>& x = a.value();
  if (axis != 0 && axis != 1) throw DimensionError("mean_over axis must be 0 or 1");
  Matrix<T> out = axis == 0 ? Matrix<T>(x.colwise().mean()) : Matrix<T>(x.rowwise().mean());
  const Index rows = x.rows();
  const Index cols = x.cols();
  return a.tape().record(std::move(out), {a},
                         [a, axis, rows, cols](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                           if (axis == 0) {
                             t.accumulate(a, g.replicate(rows, 1) / T(rows));
                           } else {
                             t.accumulate(a, g.replicate(1, cols) / T(cols));
                           }
                         });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  Matrix<T> out = Matrix<T>::Constant(1, 1, a.value().sum());
  const Index rows = a.rows();
  const Index cols = a.cols();
  return a.tape().record(std::move(out), {a},
                         [a, rows, cols](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                           t.accumulate(a, Matrix<T>::Constant(rows, cols, g(0, 0)));
                         });
}

template <typename T>
Var<T> trace(const Var<T>& a) {
  const Matrix<T>& x = a.value();
  if (x.rows() != x.cols()) {
    throw DimensionError("trace of non-square " + shape_string(x.rows(), x.cols()));
  }
  Matrix<T> out = Matrix<T>::Constant(1, 1, x.trace());
  const Index n = x.rows();
  return a.tape().record(std::move(out), {a},
                         [a, n](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                           t.accumulate(a, Matrix<T>::Identity(n, n) * g(0, 0));
                         });
}

// Stacks matrices with equal column counts along rows.
template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero matrices");
  Tape<T>& tape = parts[0].tape();
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows column mismatch: " +
                           shape_string(parts[0].rows(), cols) + " vs " +
                           shape_string(p.rows(), p.cols()));
    }
    rows += p.rows();
  }
  Matrix<T> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return tape.record(std::move(out), parts,
                     [inputs](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                       Index offset = 0;
                       for (const auto& p : inputs) {
                         const Index r = t.value(p).rows();
                         t.accumulate(p, g.middleRows(offset, r));
                         offset += r;
                       }
                     });
}

template <typename T>
Var<T> slice_rows(const Var<T>& a, Index begin, Index count) {
  const Matrix<T>& x = a.value();
  if (begin < 0 || count <= 0 || begin + count > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_string(x.rows(), x.cols()));
  }
  Matrix<T> out = x.middleRows(begin, count);
  return a.tape().record(std::move(out), {a},
                         [a, begin, count](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                           const Matrix<T>& x = t.value(a);
                           Matrix<T> full = Matrix<T>::Zero(x.rows(), x.cols());
                           full.middleRows(begin, count) = g;
                           t.accumulate(a, full);
                         });
}

// Mean cross-entropy of row-wise logits against integer labels.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  const Matrix<T>& z = logits.value();
  if (static_cast<Index>(labels.size()) != z.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(z.rows()) + " rows");
  }
  Matrix<T> shifted = z.colwise() - z.rowwise().maxCoeff();
  Matrix<T> lse = shifted.array().exp().rowwise().sum().log().matrix();
  T loss = 0;
  for (Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= z.cols()) throw DimensionError("label out of range");
    loss += lse(i, 0) - shifted(i, y);
  }
  const Index batch = z.rows();
  loss /= T(batch);
  std::vector<int> ys(labels.begin(), labels.end());
  Matrix<T> probs = (shifted.colwise() - lse.col(0)).array().exp().matrix();
  return logits.tape().record(
      Matrix<T>::Constant(1, 1, loss), {logits},
      [logits, ys, probs, batch](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
        Matrix<T> d = probs;
        for (Index i = 0; i < batch; ++i) d(i, ys[static_cast<std::size_t>(i)]) -= T(1);
        t.accumulate(logits, d * (g(0, 0) / T(batch)));
      });
}

// x W + b for x (N x in), W (in x out), b (1 x out).
template <typename T>
Var<T> affine(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  return add(matmul(x, weight), bias);
}

}  // namespace tcp
