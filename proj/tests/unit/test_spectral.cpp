#include <gtest/gtest.h>

#include <limits>

#include "helpers.hpp"
#include "tcp/diagnostics.hpp"

using namespace tcp;
using tcp::testing::rel_frobenius;

TEST(NewtonSchulz, ScalarCaseForAnyIterationCount) {
  Matrix<double> a(1, 1);
  a << 4;
  for (int k : {0, 1, 3, 10}) {
    auto r = newton_schulz_sqrt(a, k);
    EXPECT_DOUBLE_EQ(r.sqrt_mat(0, 0), 2.0) << "K=" << k;
    EXPECT_EQ(r.pre_trace, 4.0);
  }
}

TEST(NewtonSchulz, IdentityStaysScalarAndConverges) {
  // I/d is a scalar multiple of I, so every iterate is too; the scalar
  // approaches 1/sqrt(d) as K grows and compensation brings it to 1.
  for (Index d : {2, 8, 64}) {
    double previous = std::numeric_limits<double>::infinity();
    for (int k : {1, 3, 10, 20}) {
      auto r = newton_schulz_sqrt<double>(Matrix<double>::Identity(d, d), k);
      const double c = r.sqrt_mat(0, 0);
      EXPECT_EQ(r.sqrt_mat, c * Matrix<double>::Identity(d, d)) << "d=" << d << " K=" << k;
      EXPECT_LE(std::abs(c - 1.0), previous);
      previous = std::abs(c - 1.0);
    }
    EXPECT_LE(previous, 1e-6);
  }
  Matrix<double> one = Matrix<double>::Identity(1, 1);
  EXPECT_EQ(newton_schulz_sqrt(one, 3).sqrt_mat, one);
}

TEST(NewtonSchulz, DiagonalAgainstOracle) {
  Matrix<double> a = Eigen::Vector2d(4, 1).asDiagonal();
  Matrix<double> oracle = eig_sqrt_oracle(a);
  EXPECT_LE((oracle - Matrix<double>(Eigen::Vector2d(2, 1).asDiagonal())).cwiseAbs().maxCoeff(), 1e-14);
  auto r1 = newton_schulz_sqrt(a, 1);
  auto r3 = newton_schulz_sqrt(a, 3);
  auto r10 = newton_schulz_sqrt(a, 10);
  EXPECT_LT(r3.residual, r1.residual);
  EXPECT_LE(r10.residual, 1e-6);
  EXPECT_LE(rel_frobenius(r10.sqrt_mat, oracle), 1e-6);
  EXPECT_LT(rel_frobenius(r3.sqrt_mat, oracle), rel_frobenius(r1.sqrt_mat, oracle));
}

TEST(NewtonSchulz, ZeroMatrixIsDegenerate) {
  auto r = newton_schulz_sqrt<double>(Matrix<double>::Zero(3, 3), 3);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.sqrt_mat, Matrix<double>::Zero(3, 3));
}

TEST(NewtonSchulz, RejectsAsymmetricInput) {
  Matrix<double> a = Matrix<double>::Identity(2, 2);
  a(0, 1) = 0.5;
  EXPECT_THROW(newton_schulz_sqrt(a, 3), IntegrityError);
}

TEST(NewtonSchulz, OutputSymmetric) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = random_spd(16, 100.0, seed);
    auto r = newton_schulz_sqrt(a, 3);
    EXPECT_LE((r.sqrt_mat - r.sqrt_mat.transpose()).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_TRUE(std::isfinite(r.residual));
  }
}

TEST(NewtonSchulz, ResidualNonIncreasingAndConverges) {
  for (Index d : {8, 32, 64}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto rows = sqrt_bench(random_spd(d, 100.0, seed), {1, 2, 3, 5, 10, 20});
      EXPECT_TRUE(residual_converges(rows, 1e-6)) << "d=" << d << " seed=" << seed;
      EXPECT_LE(rows.back().oracle_error, 1e-5);
    }
  }
}

TEST(NewtonSchulz, SinglePrecisionTracksDouble) {
  auto a = random_spd(8, 10.0, 4);
  auto rd = newton_schulz_sqrt(a, 5);
  auto rf = newton_schulz_sqrt<float>(a.cast<float>(), 5);
  EXPECT_LE(rel_frobenius(rf.sqrt_mat.cast<double>(), rd.sqrt_mat), 1e-5);
}

TEST(JacobiOracle, DiagonalInput) {
  Matrix<double> a = Eigen::Vector3d(9, 4, 1).asDiagonal();
  Matrix<double> ref = Eigen::Vector3d(3, 2, 1).asDiagonal();
  EXPECT_LE((eig_sqrt_oracle(a) - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(JacobiOracle, SquaresBackToInput) {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix<double> m = rng.normal_matrix<double>(8, 8);
    Matrix<double> a = m.transpose() * m;
    Matrix<double> s = eig_sqrt_oracle(a);
    EXPECT_LE(rel_frobenius(s * s, a), 1e-10);
  }
}

TEST(JacobiOracle, RankOneClosedForm) {
  Rng rng(2);
  Eigen::VectorXd v = rng.normal_matrix<double>(6, 1);
  Matrix<double> a = v * v.transpose();
  // Rounding-level eigenvalues of the null space come back as their square roots.
  EXPECT_LE(rel_frobenius(eig_sqrt_oracle(a), a / v.norm()), 1e-7);
}

TEST(JacobiOracle, DecompositionReconstructs) {
  Rng rng(3);
  Matrix<double> m = rng.normal_matrix<double>(10, 10);
  Matrix<double> a = m + m.transpose();
  auto e = jacobi_eigen(a);
  EXPECT_LE(rel_frobenius(e.vectors * e.values.asDiagonal() * e.vectors.transpose(), a), 1e-12);
  EXPECT_LE((e.vectors.transpose() * e.vectors - Matrix<double>::Identity(10, 10)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RandomSpd, HasRequestedCondition) {
  auto a = random_spd(12, 100.0, 5);
  auto e = jacobi_eigen(a);
  EXPECT_NEAR(e.values.maxCoeff() / e.values.minCoeff(), 100.0, 1e-6);
}

TEST(SpectralGradients, WithinTolerance) {
  for (const GradCase& c : run_grad_checks(GradScope::Spectral, 9)) {
    EXPECT_LE(c.report.max_rel_error, 1e-4) << c.name;
  }
}
