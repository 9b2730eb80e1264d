#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>

#include "helpers.hpp"
#include "tcp/diagnostics.hpp"

using namespace tcp;
using tcp::testing::random_clip;
using tcp::testing::rel_frobenius;

TEST(TemporalConv, IdentityKernelIsIdentity) {
  Rng rng(1);
  auto clip = random_clip<double>(rng, 4, 3, 5);
  auto out = temporal_conv(clip, identity_kernel<double>(5, 1));
  for (Index l = 0; l < 4; ++l) EXPECT_EQ(out.frames[l], clip.frames[l]);
}

TEST(TemporalConv, ConstantClipCollapsesToTapSum) {
  Rng rng(2);
  Matrix<double> x = rng.normal_matrix<double>(3, 4);
  FeatureClip<double> clip;
  for (int l = 0; l < 5; ++l) clip.frames.push_back(x);
  auto k = random_kernel<double>(4, 3, rng);
  Matrix<double> w = Matrix<double>::Zero(4, 4);
  for (const auto& t : k.taps) w += t.value;
  for (const auto& y : temporal_conv(clip, k).frames) EXPECT_LE(rel_frobenius(y, x * w), 1e-12);
}

TEST(TemporalConv, MatchesShiftedSum) {
  Rng rng(3);
  auto clip = random_clip<double>(rng, 5, 4, 3);
  auto k = random_kernel<double>(3, 3, rng);
  auto out = temporal_conv(clip, k);
  for (int l = 0; l < 5; ++l) {
    Matrix<double> ref = Matrix<double>::Zero(4, 3);
    for (int j = -1; j <= 1; ++j) {
      const int src = std::clamp(l + j, 0, 4);
      ref += clip.frames[static_cast<std::size_t>(src)] * k.taps[static_cast<std::size_t>(j + 1)].value;
    }
    EXPECT_LE(rel_frobenius(out.frames[static_cast<std::size_t>(l)], ref), 1e-10);
  }
}

TEST(TemporalConv, WidthMismatchThrows) {
  Rng rng(4);
  auto clip = random_clip<double>(rng, 3, 2, 4);
  EXPECT_THROW(temporal_conv(clip, identity_kernel<double>(5, 3)), DimensionError);
  EXPECT_THROW(identity_kernel<double>(4, 4), ConfigError);
  EXPECT_THROW(identity_kernel<double>(4, 0), ConfigError);
}

TEST(TcpPool, IdentityKernelReducesToPlainGcp) {
  Rng rng(5);
  auto clip = random_clip<double>(rng, 4, 6, 5);
  EXPECT_LE(rel_frobenius(tcp_pool_efficient(clip, identity_kernel<double>(5, 1)).mat, plain_gcp(clip).mat), 1e-12);
}

TEST(TcpPool, OutputSymmetricPsd) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto clip = random_clip<double>(rng, 4, 3, 6);
    auto c = tcp_pool_efficient(clip, random_kernel<double>(6, 3, rng)).mat;
    EXPECT_LE((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, c.cwiseAbs().maxCoeff()));
    Eigen::SelfAdjointEigenSolver<Matrix<double>> es(c);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-6 * c.trace());
  }
}

TEST(TcpPool, EfficientEqualsExpandedOnSmallCase) {
  Rng rng(7);
  auto clip = random_clip<double>(rng, 4, 6, 8);
  auto k = random_kernel<double>(8, 3, rng, 0.3);
  EXPECT_LE(rel_frobenius(tcp_pool_efficient(clip, k).mat, tcp_pool_expanded(clip, k).mat), 1e-5);

  FeatureClip<float> clip_f;
  for (const auto& f : clip.frames) clip_f.frames.push_back(f.cast<float>());
  TemporalKernel<float> k_f;
  for (const auto& t : k.taps) k_f.taps.push_back(Parameter<float>{t.name, t.value.cast<float>()});
  EXPECT_LE(rel_frobenius(tcp_pool_efficient(clip_f, k_f).mat, tcp_pool_expanded(clip_f, k_f).mat), 1e-5);
}

TEST(TcpPool, ZeroSideTapsKeepOnlyIntraFrameTerm) {
  Rng rng(8);
  auto clip = random_clip<double>(rng, 4, 5, 3);
  auto k = identity_kernel<double>(3, 3);
  k.tap(0).value = rng.normal_matrix<double>(3, 3);
  Matrix<double> ref = Matrix<double>::Zero(3, 3);
  for (std::size_t l = 0; l < 4; ++l) ref += k.tap(0).value.transpose() * cross_cov(clip, l, l).mat * k.tap(0).value;
  ref /= 4.0;
  EXPECT_LE(rel_frobenius(tcp_pool_expanded(clip, k).mat, ref), 1e-12);
}

TEST(TcpPool, NinePairTermsSumToEfficientForm) {
  Rng rng(9);
  auto clip = random_clip<double>(rng, 3, 4, 3);
  auto k = random_kernel<double>(3, 3, rng);
  Matrix<double> ref = Matrix<double>::Zero(3, 3);
  int terms = 0;
  for (int l = 0; l < 3; ++l)
    for (int j = -1; j <= 1; ++j)
      for (int jp = -1; jp <= 1; ++jp) {
        const auto a = static_cast<std::size_t>(std::clamp(l + j, 0, 2));
        const auto b = static_cast<std::size_t>(std::clamp(l + jp, 0, 2));
        Matrix<double> c_ab = clip.frames[a].transpose() * clip.frames[b] / 4.0;
        ref += k.tap(j).value.transpose() * c_ab * k.tap(jp).value;
        if (l == 0) ++terms;
      }
  ref /= 3.0;
  EXPECT_EQ(terms, 9);
  EXPECT_LE(rel_frobenius(tcp_pool_efficient(clip, k).mat, ref), 1e-5);
}

TEST(TcpPool, SensitiveToFrameOrder) {
  Rng rng(10);
  auto clip = random_clip<double>(rng, 4, 5, 4);
  auto k = random_kernel<double>(4, 3, rng);
  const Matrix<double> base = tcp_pool_efficient(clip, k).mat;
  double largest = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    auto shuffled = clip;
    std::shuffle(shuffled.frames.begin(), shuffled.frames.end(), rng.engine());
    largest = std::max(largest, rel_frobenius(tcp_pool_efficient(shuffled, k).mat, base));
  }
  EXPECT_GT(largest, 1e-3);
  EXPECT_LE(rel_frobenius(plain_gcp(clip.reversed()).mat, plain_gcp(clip).mat), 1e-12);
}

TEST(CrossCov, MarksOrderedPair) {
  Rng rng(11);
  auto clip = random_clip<double>(rng, 3, 4, 2);
  auto c = cross_cov(clip, 0, 2);
  EXPECT_EQ(c.source.kind, CovSource::Kind::Pair);
  EXPECT_EQ(c.source.first, 0);
  EXPECT_EQ(c.source.second, 2);
  EXPECT_LE(rel_frobenius(cross_cov(clip, 2, 0).mat, c.mat.transpose()), 1e-15);
}

TEST(KernelInit, CentreTapNearIdentity) {
  Rng rng(12);
  auto k = make_temporal_kernel<double>(16, 5, rng);
  EXPECT_EQ(k.kappa(), 5);
  EXPECT_LE((k.tap(0).value - Matrix<double>::Identity(16, 16)).cwiseAbs().maxCoeff(), 0.06);
  EXPECT_LE(k.tap(2).value.cwiseAbs().maxCoeff(), 0.06);
  EXPECT_GT(k.tap(-1).value.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Equivalence, SampledGridInDoubleAndSingle) {
  EquivalenceGrid grid;
  grid.trials = 2;
  auto r = run_equivalence(grid);
  EXPECT_EQ(r.cases, 4u * 3u * 3u * 3u * 2u);
  EXPECT_LE(r.max_discrepancy, 1e-10);
  grid.dtype = DType::Single;
  EXPECT_LE(run_equivalence(grid).max_discrepancy, 1e-5);
}

TEST(Equivalence, InjectedFaultIsDetected) {
  EquivalenceGrid grid;
  grid.trials = 1;
  grid.inject_fault = true;
  EXPECT_FALSE(run_equivalence(grid).passed());
}

TEST(TconvGradients, WithinTolerance) {
  for (const GradCase& c : run_grad_checks(GradScope::TemporalConv, 5)) {
    EXPECT_LE(c.report.max_rel_error, 1e-4) << c.name;
  }
}
