#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "tcp/ops.hpp"

namespace tcp {

// Seeded generator used for every random draw in the library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double sigma = 1.0) { return std::normal_distribution<double>(0.0, sigma)(engine_); }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

  template <typename T>
  Matrix<T> uniform_matrix(Index rows, Index cols, double bound) {
    Matrix<T> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(uniform(-bound, bound));
    return m;
  }

  template <typename T>
  Matrix<T> normal_matrix(Index rows, Index cols, double sigma = 1.0) {
    Matrix<T> m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<T>(normal(sigma));
    return m;
  }

 private:
  std::mt19937_64 engine_;
};

// Channel map x -> x W + b, W is (in x out).
template <typename T>
struct AffineMap {
  Parameter<T> weight;
  Parameter<T> bias;

  Index in() const { return weight.value.rows(); }
  Index out() const { return weight.value.cols(); }
  bool empty() const { return weight.empty(); }

  Var<T> operator()(const Var<T>& x) const {
    Tape<T>& tape = x.tape();
    if (x.cols() != in()) {
      throw DimensionError(weight.name + ": input " + shape_string(x.rows(), x.cols()) +
                           " does not match weight " + shape_string(in(), out()));
    }
    return affine(x, tape.param(weight), tape.param(bias));
  }
};

// Fan-in scaled uniform init U(-1/sqrt(in), 1/sqrt(in)) for weight and bias;
// `gain` multiplies the bound.
template <typename T>
AffineMap<T> make_affine(const std::string& name, Index in, Index out, Rng& rng,
                         double gain = 1.0) {
  const double bound = gain / std::sqrt(static_cast<double>(in));
  AffineMap<T> m;
  m.weight = Parameter<T>{name + ".weight", rng.uniform_matrix<T>(in, out, bound), true, true};
  m.bias = Parameter<T>{name + ".bias", rng.uniform_matrix<T>(1, out, bound), true, false};
  return m;
}

}  // namespace tcp
