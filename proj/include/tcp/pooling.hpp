#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tcp/ops.hpp"

namespace tcp {

// L frames of N x C features (rows are spatial positions).
template <typename T>
struct FeatureClip {
  std::vector<Matrix<T>> frames;
  std::optional<std::pair<Index, Index>> spatial;  // (H, W) with H * W == N

  Index length() const { return static_cast<Index>(frames.size()); }
  Index positions() const { return frames.empty() ? 0 : frames[0].rows(); }
  Index channels() const { return frames.empty() ? 0 : frames[0].cols(); }

  void validate() const {
    if (frames.empty()) throw DimensionError("empty clip");
    for (const auto& f : frames) {
      if (f.rows() != positions() || f.cols() != channels()) {
        throw DimensionError("clip frames disagree in shape: " +
                             shape_string(positions(), channels()) + " vs " +
                             shape_string(f.rows(), f.cols()));
      }
    }
    if (spatial && spatial->first * spatial->second != positions()) {
      throw DimensionError("clip H*W does not equal N");
    }
  }

  FeatureClip reversed() const {
    FeatureClip out = *this;
    std::reverse(out.frames.begin(), out.frames.end());
    return out;
  }

  static FeatureClip from_tensor(const Tensor<T>& t) {
    if (t.rank() != 3) throw DimensionError("clip tensor must be L x N x C, got " + shape_string(t.shape()));
    FeatureClip clip;
    for (std::size_t l = 0; l < t.shape()[0]; ++l) clip.frames.push_back(t.slab(l));
    return clip;
  }

  Tensor<T> to_tensor() const {
    validate();
    std::vector<T> data;
    data.reserve(static_cast<std::size_t>(length() * positions() * channels()));
    for (const auto& f : frames) {
      RowMajorMatrix<T> rm = f;
      data.insert(data.end(), rm.data(), rm.data() + rm.size());
    }
    return Tensor<T>({static_cast<std::size_t>(length()), static_cast<std::size_t>(positions()),
                      static_cast<std::size_t>(channels())},
                     std::move(data));
  }
};

// Which frames a covariance came from.
struct CovSource {
  enum class Kind { Frame, Pair, Pooled } kind = Kind::Pooled;
  Index first = -1;
  Index second = -1;
};

template <typename T>
struct CovarianceMatrix {
  Matrix<T> mat;
  bool centered = false;
  CovSource source;

  Index dim() const { return mat.rows(); }
};

enum class PoolKind { Gap, PlainGcp, Tcp };

template <typename T>
struct PooledRepresentation {
  RowVector<T> vec;
  PoolKind kind = PoolKind::Gap;

  Index dim() const { return vec.size(); }
};

inline Index triangle_size(Index d) { return d * (d + 1) / 2; }

// ---- eager forms ----

// Mean of all L*N feature vectors.
template <typename T>
PooledRepresentation<T> gap(const FeatureClip<T>& clip) {
  clip.validate();
  RowVector<T> acc = RowVector<T>::Zero(clip.channels());
  for (const auto& f : clip.frames) acc += f.colwise().sum();
  acc /= static_cast<T>(clip.length() * clip.positions());
  return {acc, PoolKind::Gap};
}

// (1/N) X^T X, or the centered version (1/N) (X - mean)^T (X - mean).
template <typename T>
CovarianceMatrix<T> frame_cov(const Matrix<T>& x, bool centered = false) {
  if (x.rows() < 1) throw DimensionError("frame_cov needs at least one row");
  CovarianceMatrix<T> c;
  c.centered = centered;
  c.source = {CovSource::Kind::Frame, -1, -1};
  if (centered) {
    Matrix<T> xc = x.rowwise() - x.colwise().mean();
    c.mat = xc.transpose() * xc / static_cast<T>(x.rows());
  } else {
    c.mat = x.transpose() * x / static_cast<T>(x.rows());
  }
  return c;
}

// (1/L) sum_l frame_cov(X_l), accumulated in frame order.
template <typename T>
CovarianceMatrix<T> plain_gcp(const FeatureClip<T>& clip, bool centered = false) {
  clip.validate();
  CovarianceMatrix<T> out;
  out.centered = centered;
  out.mat = Matrix<T>::Zero(clip.channels(), clip.channels());
  for (const auto& f : clip.frames) out.mat += frame_cov(f, centered).mat;
  out.mat /= static_cast<T>(clip.length());
  return out;
}

template <typename T>
void check_symmetric(const Matrix<T>& m, double tol, const char* what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + ": matrix not square " +
                         shape_string(m.rows(), m.cols()));
  }
  const double scale = std::max(1.0, static_cast<double>(m.cwiseAbs().maxCoeff()));
  const double asym = static_cast<double>((m - m.transpose()).cwiseAbs().maxCoeff());
  if (asym > tol * scale) {
    throw IntegrityError(std::string(what) + ": matrix asymmetric by " + std::to_string(asym));
  }
}

// Row-major upper triangle including the diagonal.
template <typename T>
RowVector<T> triangulate(const Matrix<T>& m) {
  check_symmetric(m, 1e-4, "triangulate");
  const Index d = m.rows();
  RowVector<T> v(triangle_size(d));
  Index k = 0;
  for (Index i = 0; i < d; ++i)
    for (Index j = i; j < d; ++j) v(k++) = m(i, j);
  return v;
}

template <typename T>
PooledRepresentation<T> triangulate(const CovarianceMatrix<T>& c, PoolKind kind = PoolKind::Tcp) {
  return {triangulate(c.mat), kind};
}

template <typename T>
Matrix<T> untriangulate(const RowVector<T>& v, Index d) {
  if (v.size() != triangle_size(d)) throw DimensionError("untriangulate: length mismatch");
  Matrix<T> m(d, d);
  Index k = 0;
  for (Index i = 0; i < d; ++i)
    for (Index j = i; j < d; ++j) m(i, j) = m(j, i) = v(k++);
  return m;
}

// ---- differentiable forms ----

template <typename T>
Var<T> gap(std::span<const Var<T>> frames) {
  std::vector<Var<T>> means;
  for (const auto& f : frames) means.push_back(mean_over(f, 0));
  return mean_over(concat_rows<T>(means), 0);
}

template <typename T>
Var<T> frame_cov(const Var<T>& x, bool centered = false) {
  const T inv_n = T(1) / static_cast<T>(x.rows());
  if (!centered) return scale(gram(x), inv_n);
  return scale(gram(sub(x, mean_over(x, 0))), inv_n);
}

template <typename T>
Var<T> plain_gcp(std::span<const Var<T>> frames, bool centered = false) {
  if (frames.empty()) throw DimensionError("empty clip");
  Var<T> acc = frame_cov(frames[0], centered);
  for (std::size_t l = 1; l < frames.size(); ++l) acc = add(acc, frame_cov(frames[l], centered));
  return scale(acc, T(1) / static_cast<T>(frames.size()));
}

template <typename T>
Var<T> triangulate(const Var<T>& a) {
  const Matrix<T>& m = a.value();
  RowVector<T> v = triangulate(m);
  const Index d = m.rows();
  return a.tape().record(Matrix<T>(v), {a},
                         [a, d](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                           Matrix<T> dm = Matrix<T>::Zero(d, d);
                           Index k = 0;
                           for (Index i = 0; i < d; ++i)
                             for (Index j = i; j < d; ++j) dm(i, j) += g(0, k++);
                           t.accumulate(a, dm);
                         });
}

}  // namespace tcp
