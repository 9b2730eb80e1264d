#pragma once

#include <cmath>
#include <string>

#include "tcp/params.hpp"

namespace tcp {

// Per-channel normalization state: learnable scale/shift plus running
// statistics used in evaluation mode.
template <typename T>
struct NormState {
  Parameter<T> scale;
  Parameter<T> shift;
  RowVector<T> running_mean;
  RowVector<T> running_var;
  T momentum = T(0.9);  // running <- momentum * running + (1 - momentum) * batch
  T eps = T(1e-5);

  Index channels() const { return scale.value.cols(); }
};

template <typename T>
NormState<T> make_norm_state(const std::string& name, Index channels) {
  NormState<T> s;
  s.scale = Parameter<T>{name + ".scale", Matrix<T>::Ones(1, channels), true, false};
  s.shift = Parameter<T>{name + ".shift", Matrix<T>::Zero(1, channels), true, false};
  s.running_mean = RowVector<T>::Zero(channels);
  s.running_var = RowVector<T>::Ones(channels);
  return s;
}

// Normalizes each column of x (M x C, M = batch x positions). Training mode
// uses batch statistics and updates the running ones (unbiased variance);
// evaluation mode uses the running statistics.
template <typename T>
Var<T> batch_norm(const Var<T>& x, NormState<T>& state, bool training) {
  Tape<T>& tape = x.tape();
  const Matrix<T>& xv = x.value();
  const Index m = xv.rows();
  const Index c = xv.cols();
  if (c != state.channels()) {
    throw DimensionError("batch_norm: input " + shape_string(m, c) + " vs " +
                         std::to_string(state.channels()) + " channels");
  }
  Var<T> scale = tape.param(state.scale);
  Var<T> shift = tape.param(state.shift);

  RowVector<T> mean;
  RowVector<T> var;
  if (training) {
    mean = xv.colwise().mean();
    var = (xv.rowwise() - mean).array().square().colwise().mean();
    const T unbias = m > 1 ? T(m) / T(m - 1) : T(1);
    state.running_mean = state.momentum * state.running_mean + (T(1) - state.momentum) * mean;
    state.running_var =
        state.momentum * state.running_var + (T(1) - state.momentum) * (var * unbias);
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  RowVector<T> inv_std = (var.array() + state.eps).rsqrt();
  Matrix<T> xhat = (xv.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix<T> out = (xhat.array().rowwise() * state.scale.value.row(0).array()).rowwise() +
                  state.shift.value.row(0).array();

  return tape.record(
      std::move(out), {x, scale, shift},
      [x, scale, shift, xhat, inv_std, training, m](Tape<T>& t, const Matrix<T>& g,
                                                     const Matrix<T>&) {
        t.accumulate(shift, g.colwise().sum());
        t.accumulate(scale, g.cwiseProduct(xhat).colwise().sum());
        if (!t.requires_grad(x)) return;
        Matrix<T> dxhat = g.array().rowwise() * t.value(scale).row(0).array();
        if (!training) {
          t.accumulate(x, (dxhat.array().rowwise() * inv_std.array()).matrix());
          return;
        }
        // dx = inv_std / m * (m dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
        RowVector<T> s1 = dxhat.colwise().sum();
        RowVector<T> s2 = dxhat.cwiseProduct(xhat).colwise().sum();
        Matrix<T> dx = (dxhat * T(m)).rowwise() - s1;
        dx -= (xhat.array().rowwise() * s2.array()).matrix();
        dx = dx.array().rowwise() * (inv_std.array() / T(m));
        t.accumulate(x, dx);
      });
}

// Tensor convenience: (B x N x C) or (M x C) input, normalized over all
// leading positions.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& a, NormState<T>& state, bool training) {
  const std::size_t c = a.shape().back();
  Tape<T> tape;
  Matrix<T> flat = Eigen::Map<const RowMajorMatrix<T>>(a.data().data(),
                                                       static_cast<Index>(a.size() / c),
                                                       static_cast<Index>(c));
  Matrix<T> out = batch_norm(tape.constant(flat), state, training).value();
  RowMajorMatrix<T> rm = out;
  return Tensor<T>(a.shape(), std::vector<T>(rm.data(), rm.data() + rm.size()));
}

}  // namespace tcp
