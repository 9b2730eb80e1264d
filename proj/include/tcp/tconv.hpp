#pragma once

#include <span>
#include <string>
#include <vector>

#include "tcp/params.hpp"
#include "tcp/pooling.hpp"

namespace tcp {

// kappa taps W_j (d x d), j = -(kappa-1)/2 .. (kappa-1)/2, stored in order.
template <typename T>
struct TemporalKernel {
  std::vector<Parameter<T>> taps;

  int kappa() const { return static_cast<int>(taps.size()); }
  int radius() const { return (kappa() - 1) / 2; }
  Index width() const { return taps.empty() ? 0 : taps[0].value.rows(); }

  Parameter<T>& tap(int offset) { return taps[static_cast<std::size_t>(offset + radius())]; }
  const Parameter<T>& tap(int offset) const {
    return taps[static_cast<std::size_t>(offset + radius())];
  }

  void validate() const {
    if (kappa() < 1 || kappa() % 2 == 0) {
      throw ConfigError("temporal kernel size must be odd and >= 1, got " + std::to_string(kappa()));
    }
    for (const auto& w : taps) {
      if (w.value.rows() != width() || w.value.cols() != width()) {
        throw DimensionError("temporal kernel taps must all be " + shape_string(width(), width()));
      }
    }
  }
};

inline void check_kappa(int kappa) {
  if (kappa < 1 || kappa % 2 == 0) {
    throw ConfigError("temporal kernel size must be odd and >= 1, got " + std::to_string(kappa));
  }
}

template <typename T>
TemporalKernel<T> identity_kernel(Index d, int kappa, const std::string& prefix = "kernel") {
  check_kappa(kappa);
  TemporalKernel<T> k;
  const int r = (kappa - 1) / 2;
  for (int j = -r; j <= r; ++j) {
    Matrix<T> w = j == 0 ? Matrix<T>(Matrix<T>::Identity(d, d)) : Matrix<T>(Matrix<T>::Zero(d, d));
    k.taps.push_back(Parameter<T>{prefix + ".tap" + std::to_string(j + r), std::move(w), true, true});
  }
  return k;
}

// Identity centre tap plus N(0, noise^2) perturbations on every tap.
template <typename T>
TemporalKernel<T> make_temporal_kernel(Index d, int kappa, Rng& rng, double noise = 0.01,
                                       const std::string& prefix = "kernel") {
  TemporalKernel<T> k = identity_kernel<T>(d, kappa, prefix);
  for (auto& w : k.taps) w.value += rng.normal_matrix<T>(d, d, noise);
  return k;
}

template <typename T>
TemporalKernel<T> random_kernel(Index d, int kappa, Rng& rng, double sigma = 1.0,
                                const std::string& prefix = "kernel") {
  TemporalKernel<T> k = identity_kernel<T>(d, kappa, prefix);
  for (auto& w : k.taps) w.value = rng.normal_matrix<T>(d, d, sigma);
  return k;
}

inline std::size_t clamp_frame(long l, std::size_t length) {
  if (l < 0) return 0;
  if (l >= static_cast<long>(length)) return length - 1;
  return static_cast<std::size_t>(l);
}

// Y_l = sum_j X_{l+j} W_j with replicate padding at both ends.
template <typename T>
std::vector<Var<T>> temporal_conv(std::span<const Var<T>> frames, const TemporalKernel<T>& k) {
  k.validate();
  if (frames.empty()) throw DimensionError("empty clip");
  if (frames[0].cols() != k.width()) {
    throw DimensionError("temporal_conv: clip width " + std::to_string(frames[0].cols()) +
                         " vs kernel width " + std::to_string(k.width()));
  }
  Tape<T>& tape = frames[0].tape();
  std::vector<Var<T>> taps;
  for (const auto& w : k.taps) taps.push_back(tape.param(w));

  const long length = static_cast<long>(frames.size());
  const int r = k.radius();
  std::vector<Var<T>> out;
  for (long l = 0; l < length; ++l) {
    Var<T> acc;
    for (int j = -r; j <= r; ++j) {
      Var<T> term = matmul(frames[clamp_frame(l + j, frames.size())], taps[j + r]);
      acc = acc.valid() ? add(acc, term) : term;
    }
    out.push_back(acc);
  }
  return out;
}

// (1/L) sum_l (1/N) Y_l^T Y_l over the temporally convolved frames. All
// frames share N, so this is one Gram matrix of the stacked frames / (L N).
template <typename T>
Var<T> tcp_pool_efficient(std::span<const Var<T>> frames, const TemporalKernel<T>& k) {
  std::vector<Var<T>> y = temporal_conv(frames, k);
  const Index rows = static_cast<Index>(y.size()) * y[0].rows();
  return scale(gram(concat_rows<T>(y)), T(1) / static_cast<T>(rows));
}

// ---- eager forms ----

template <typename T>
FeatureClip<T> temporal_conv(const FeatureClip<T>& clip, const TemporalKernel<T>& k) {
  clip.validate();
  Tape<T> tape;
  std::vector<Var<T>> frames;
  for (const auto& f : clip.frames) frames.push_back(tape.constant(f));
  FeatureClip<T> out;
  out.spatial = clip.spatial;
  for (const auto& y : temporal_conv<T>(frames, k)) out.frames.push_back(y.value());
  return out;
}

template <typename T>
CovarianceMatrix<T> tcp_pool_efficient(const FeatureClip<T>& clip, const TemporalKernel<T>& k) {
  clip.validate();
  Tape<T> tape;
  std::vector<Var<T>> frames;
  for (const auto& f : clip.frames) frames.push_back(tape.constant(f));
  return {tcp_pool_efficient<T>(frames, k).value(), false, {}};
}

// Cross-covariance (1/N) X_a^T X_b.
template <typename T>
CovarianceMatrix<T> cross_cov(const FeatureClip<T>& clip, std::size_t a, std::size_t b) {
  CovarianceMatrix<T> c;
  c.mat = clip.frames[a].transpose() * clip.frames[b] / static_cast<T>(clip.positions());
  c.source = {a == b ? CovSource::Kind::Frame : CovSource::Kind::Pair, static_cast<Index>(a),
              static_cast<Index>(b)};
  return c;
}

// Covariance-space form: for each l, sums W_j^T C_{l+j, l+j'} W_j' over all
// ordered tap pairs (diagonal pairs are intra-frame terms, the rest
// inter-frame cross-covariance terms), then averages over l. Terms are
// accumulated in double: the cross terms can cancel heavily and this form
// serves as the reference for the efficient one.
template <typename T>
CovarianceMatrix<T> tcp_pool_expanded(const FeatureClip<T>& clip, const TemporalKernel<T>& k) {
  clip.validate();
  k.validate();
  if (clip.channels() != k.width()) {
    throw DimensionError("tcp_pool_expanded: clip width vs kernel width mismatch");
  }
  const std::size_t length = clip.frames.size();
  const int r = k.radius();
  std::vector<Matrix<double>> frames, taps;
  for (const auto& f : clip.frames) frames.push_back(f.template cast<double>());
  for (const auto& w : k.taps) taps.push_back(w.value.template cast<double>());
  const double n = static_cast<double>(clip.positions());
  Matrix<double> acc = Matrix<double>::Zero(k.width(), k.width());
  for (long l = 0; l < static_cast<long>(length); ++l) {
    for (int j = -r; j <= r; ++j) {
      for (int jp = -r; jp <= r; ++jp) {
        const auto a = clamp_frame(l + j, length);
        const auto b = clamp_frame(l + jp, length);
        const Matrix<double> c_ab = frames[a].transpose() * frames[b] / n;
        acc += taps[static_cast<std::size_t>(j + r)].transpose() * c_ab * taps[static_cast<std::size_t>(jp + r)];
      }
    }
  }
  return {(acc / static_cast<double>(length)).template cast<T>(), false, {}};
}

}  // namespace tcp
