#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "tcp/batch_norm.hpp"
#include "tcp/pooling.hpp"

namespace tcp {

// Temporal-based spatial attention: queries from frame l-1, keys from
// frame l-2, values from frame l, then batch normalization.
template <typename T>
struct TsaParams {
  AffineMap<T> phi0;    // values, C -> C
  AffineMap<T> phi_m1;  // queries, C -> C_k
  AffineMap<T> phi_m2;  // keys, C -> C_k
  NormState<T> norm;

  Index channels() const { return phi0.in(); }
  Index key_width() const { return phi_m1.out(); }
};

// Temporal-based channel attention: g = sigmoid(fc2(relu(fc1(.)))).
template <typename T>
struct TcaParams {
  AffineMap<T> fc1;  // C -> C / r
  AffineMap<T> fc2;  // C / r -> C
  Index reduction = 16;
};

template <typename T>
TsaParams<T> make_tsa_params(const std::string& prefix, Index channels, Index key_width,
                             Rng& rng) {
  if (key_width < 1) throw ConfigError("TSA key width must be positive");
  TsaParams<T> p;
  p.phi0 = make_affine<T>(prefix + ".phi0", channels, channels, rng);
  p.phi_m1 = make_affine<T>(prefix + ".phi_m1", channels, key_width, rng);
  p.phi_m2 = make_affine<T>(prefix + ".phi_m2", channels, key_width, rng);
  p.norm = make_norm_state<T>(prefix + ".norm", channels);
  return p;
}

template <typename T>
TcaParams<T> make_tca_params(const std::string& prefix, Index channels, Index reduction, Rng& rng) {
  if (reduction < 1 || channels % reduction != 0) {
    throw ConfigError("TCA reduction " + std::to_string(reduction) + " must divide " +
                      std::to_string(channels) + " channels");
  }
  TcaParams<T> p;
  p.reduction = reduction;
  p.fc1 = make_affine<T>(prefix + ".fc1", channels, channels / reduction, rng);
  p.fc2 = make_affine<T>(prefix + ".fc2", channels / reduction, channels, rng);
  p.fc2.bias.value.setZero();
  return p;
}

namespace detail {
template <typename T>
void check_same_shape(const Var<T>& a, const Var<T>& b, const Var<T>& c, const char* what) {
  if (a.rows() != b.rows() || a.rows() != c.rows() || a.cols() != b.cols() ||
      a.cols() != c.cols()) {
    throw DimensionError(std::string(what) + ": frames differ in shape " +
                         shape_string(a.rows(), a.cols()) + ", " +
                         shape_string(b.rows(), b.cols()) + ", " +
                         shape_string(c.rows(), c.cols()));
  }
}
}  // namespace detail

// N x N attention map; each row (query position) sums to one over keys.
template <typename T>
Var<T> tsa_scores(const Var<T>& x_lm2, const Var<T>& x_lm1, const TsaParams<T>& p) {
  Var<T> queries = p.phi_m1(x_lm1);
  Var<T> keys = p.phi_m2(x_lm2);
  return softmax_rows(matmul(queries, transpose(keys)));
}

// Attention output before batch normalization.
template <typename T>
Var<T> tsa_unnormalized(const Var<T>& x_lm2, const Var<T>& x_lm1, const Var<T>& x_l,
                        const TsaParams<T>& p) {
  detail::check_same_shape(x_lm2, x_lm1, x_l, "tsa");
  return matmul(tsa_scores(x_lm2, x_lm1, p), p.phi0(x_l));
}

// Single-frame form; normalization statistics come from the N positions.
template <typename T>
Var<T> tsa(const Var<T>& x_lm2, const Var<T>& x_lm1, const Var<T>& x_l, TsaParams<T>& p,
           bool training) {
  return batch_norm(tsa_unnormalized(x_lm2, x_lm1, x_l, p), p.norm, training);
}

template <typename T>
Var<T> tca_gate(const Var<T>& z, const TcaParams<T>& p) {
  return sigmoid(p.fc2(relu(p.fc1(z))));
}

// 1 x C channel weights: average of g over the two spatially pooled
// temporal differences.
template <typename T>
Var<T> tca(const Var<T>& x_lm2, const Var<T>& x_lm1, const Var<T>& x_l, const TcaParams<T>& p) {
  detail::check_same_shape(x_lm2, x_lm1, x_l, "tca");
  Var<T> near = tca_gate(mean_over(sub(x_l, x_lm1), 0), p);
  Var<T> far = tca_gate(mean_over(sub(x_l, x_lm2), 0), p);
  return add(scale(near, T(0.5)), scale(far, T(0.5)));
}

// Calibrates every frame of every clip:
//   Xhat_l = (X_l + TSA(X_{l-2}, X_{l-1}, X_l)) * TCA(X_{l-2}, X_{l-1}, X_l)
// with l-1, l-2 clamped to the first frame. The TSA normalization is
// computed jointly over all frames of all clips (batch x positions).
template <typename T>
std::vector<std::vector<Var<T>>> calibrate(std::span<const std::vector<Var<T>>> clips,
                                           TsaParams<T>& tsa_p, const TcaParams<T>& tca_p,
                                           bool training) {
  std::vector<Var<T>> pre;
  for (const auto& frames : clips) {
    if (frames.empty()) throw DimensionError("empty clip");
    for (std::size_t l = 0; l < frames.size(); ++l) {
      const std::size_t l1 = l >= 1 ? l - 1 : 0;
      const std::size_t l2 = l >= 2 ? l - 2 : 0;
      pre.push_back(tsa_unnormalized(frames[l2], frames[l1], frames[l], tsa_p));
    }
  }
  Var<T> normalized = batch_norm(concat_rows<T>(pre), tsa_p.norm, training);

  std::vector<std::vector<Var<T>>> out;
  Index offset = 0;
  for (const auto& frames : clips) {
    std::vector<Var<T>> calibrated;
    for (std::size_t l = 0; l < frames.size(); ++l) {
      const std::size_t l1 = l >= 1 ? l - 1 : 0;
      const std::size_t l2 = l >= 2 ? l - 2 : 0;
      const Index n = frames[l].rows();
      Var<T> spatial = slice_rows(normalized, offset, n);
      offset += n;
      Var<T> channel = tca(frames[l2], frames[l1], frames[l], tca_p);
      calibrated.push_back(mul(add(frames[l], spatial), channel));
    }
    out.push_back(std::move(calibrated));
  }
  return out;
}

// ---- eager forms ----

template <typename T>
Matrix<T> tsa(const Matrix<T>& x_lm2, const Matrix<T>& x_lm1, const Matrix<T>& x_l,
              TsaParams<T>& p, bool training) {
  Tape<T> tape;
  return tsa(tape.constant(x_lm2), tape.constant(x_lm1), tape.constant(x_l), p, training).value();
}

template <typename T>
RowVector<T> tca(const Matrix<T>& x_lm2, const Matrix<T>& x_lm1, const Matrix<T>& x_l,
                 const TcaParams<T>& p) {
  Tape<T> tape;
  return tca(tape.constant(x_lm2), tape.constant(x_lm1), tape.constant(x_l), p).value();
}

template <typename T>
FeatureClip<T> calibrate(const FeatureClip<T>& clip, TsaParams<T>& tsa_p, const TcaParams<T>& tca_p,
                         bool training) {
  clip.validate();
  Tape<T> tape;
  std::vector<std::vector<Var<T>>> in(1);
  for (const auto& f : clip.frames) in[0].push_back(tape.constant(f));
  auto out = calibrate<T>(in, tsa_p, tca_p, training);
  FeatureClip<T> result;
  result.spatial = clip.spatial;
  for (const auto& v : out[0]) result.frames.push_back(v.value());
  return result;
}

}  // namespace tcp
