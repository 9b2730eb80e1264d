#include <gtest/gtest.h>

#include <algorithm>

#include "helpers.hpp"
#include "tcp/diagnostics.hpp"

using namespace tcp;
using tcp::testing::random_clip;
using tcp::testing::rel_frobenius;

namespace {

HeadConfig small_config(Variant v = Variant::Tcp) {
  HeadConfig cfg;
  cfg.variant = v;
  cfg.channels = 12;
  cfg.dim = 8;
  cfg.frames = 6;
  cfg.positions = 5;
  cfg.kappa = 3;
  cfg.num_classes = 4;
  cfg.key_ratio = 2;
  cfg.reduction = 2;
  cfg.seed = 7;
  return cfg;
}

template <typename T>
FeatureClip<T> project(const FeatureClip<T>& clip, const AffineMap<T>& m) {
  FeatureClip<T> out;
  for (const auto& f : clip.frames) out.frames.push_back((f * m.weight.value).rowwise() + RowVector<T>(m.bias.value));
  return out;
}

template <typename T>
RowVector<T> classify(const RowVector<T>& rep, const AffineMap<T>& m) {
  return rep * m.weight.value + RowVector<T>(m.bias.value);
}

}  // namespace

TEST(Head, RepresentationLengthForWidth128) {
  HeadConfig cfg;
  cfg.channels = 256;
  cfg.frames = 4;
  cfg.positions = 4;
  cfg.num_classes = 3;
  EXPECT_EQ(cfg.representation_dim(), 8256);
  auto p = make_params<float>(cfg);
  Rng rng(1);
  auto clip = random_clip<float>(rng, 4, 4, 256);
  auto rep = pooled_representation(clip, p, cfg);
  EXPECT_EQ(rep.dim(), 8256);
  EXPECT_EQ(tcp_forward(clip, p, cfg).size(), 3);
}

TEST(Head, GapRepresentationHasChannelWidth) {
  HeadConfig cfg;
  cfg.variant = Variant::Gap;
  cfg.frames = 2;
  cfg.positions = 3;
  EXPECT_EQ(cfg.representation_dim(), 2048);
  auto p = make_params<float>(cfg);
  Rng rng(2);
  EXPECT_EQ(pooled_representation(random_clip<float>(rng, 2, 3, 2048), p, cfg).dim(), 2048);
}

TEST(Head, ZeroClassifierGivesZeroLogit) {
  auto cfg = small_config();
  cfg.num_classes = 1;
  auto p = make_params<double>(cfg);
  p.classifier.weight.value.setZero();
  p.classifier.bias.value.setZero();
  Rng rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    auto logits = tcp_forward(random_clip<double>(rng, 6, 5, 12), p, cfg);
    ASSERT_EQ(logits.size(), 1);
    EXPECT_EQ(logits(0), 0.0);
  }
}

TEST(Head, MatchesUnfusedComposition) {
  auto cfg = small_config();
  auto p = make_params<double>(cfg);
  Rng rng(4);
  auto clip = random_clip<double>(rng, 6, 5, 12);

  auto projected = project(clip, p.proj);
  auto calibrated = calibrate(projected, p.tsa, p.tca, false);
  auto cov = tcp_pool_efficient(calibrated, p.kernel);
  auto root = newton_schulz_sqrt(cov, cfg.iterations);
  RowVector<double> ref = classify(triangulate(root.sqrt_mat), p.classifier);

  EXPECT_LE((tcp_forward(clip, p, cfg) - ref).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Head, BaselinesMatchUnfusedComposition) {
  auto cfg = small_config(Variant::PlainGcpMpn);
  auto p = make_params<double>(cfg);
  Rng rng(5);
  auto clip = random_clip<double>(rng, 6, 5, 12);
  auto root = newton_schulz_sqrt(plain_gcp(project(clip, p.proj)), cfg.iterations);
  RowVector<double> ref = classify(triangulate(root.sqrt_mat), p.classifier);
  EXPECT_LE((baseline_forward(clip, Variant::PlainGcpMpn, p, cfg) - ref).cwiseAbs().maxCoeff(), 1e-6);

  auto gcfg = small_config(Variant::Gap);
  auto gp = make_params<double>(gcfg);
  RowVector<double> gref = classify(gap(clip).vec, gp.classifier);
  EXPECT_LE((baseline_forward(clip, Variant::Gap, gp, gcfg) - gref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Head, DegeneratesToPlainGcpMpn) {
  auto cfg = small_config();
  cfg.kappa = 1;
  cfg.attention = false;
  auto p = make_params<float>(cfg);
  p.kernel.tap(0).value.setIdentity();
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto clip = random_clip<float>(rng, 6, 5, 12);
    RowVector<float> a = tcp_forward(clip, p, cfg);
    RowVector<float> b = baseline_forward(clip, Variant::PlainGcpMpn, p, cfg);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-5f);
  }
}

TEST(Head, OrderlessBaselinesIgnoreFrameOrder) {
  Rng rng(7);
  for (Variant v : {Variant::Gap, Variant::PlainGcpMpn}) {
    auto cfg = small_config(v);
    auto p = make_params<double>(cfg);
    for (int trial = 0; trial < 5; ++trial) {
      auto clip = random_clip<double>(rng, 6, 5, 12);
      auto shuffled = clip;
      std::shuffle(shuffled.frames.begin(), shuffled.frames.end(), rng.engine());
      RowVector<double> base = baseline_forward(clip, v, p, cfg);
      EXPECT_LE((baseline_forward(shuffled, v, p, cfg) - base).cwiseAbs().maxCoeff(), 1e-5);
      EXPECT_LE((baseline_forward(clip.reversed(), v, p, cfg) - base).cwiseAbs().maxCoeff(), 1e-5);
    }
  }
}

TEST(Head, TcpDistinguishesReversedClips) {
  auto cfg = small_config();
  auto p = make_params<double>(cfg);
  Rng rng(8);
  int changed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto clip = random_clip<double>(rng, 6, 5, 12);
    RowVector<double> diff = tcp_forward(clip, p, cfg) - tcp_forward(clip.reversed(), p, cfg);
    if (diff.cwiseAbs().maxCoeff() > 1e-3) ++changed;
  }
  EXPECT_GE(changed, 18);
}

TEST(Head, ForwardIsDeterministic) {
  auto cfg = small_config();
  Rng rng(9);
  auto clip = random_clip<float>(rng, 6, 5, 12);
  auto p1 = make_params<float>(cfg);
  auto p2 = make_params<float>(cfg);
  RowVector<float> a = tcp_forward(clip, p1, cfg);
  RowVector<float> b = tcp_forward(clip, p2, cfg);
  EXPECT_EQ(a, b);
  ForwardOptions train{true, 11};
  EXPECT_EQ(tcp_forward(clip, p1, cfg, train), tcp_forward(clip, p2, cfg, train));
}

TEST(Head, DropoutIsIdentityInEval) {
  Tape<double> t;
  Rng rng(10);
  Var<double> x = t.constant(rng.normal_matrix<double>(3, 50));
  Var<double> y = detail::dropout(x, 0.5, ForwardOptions{false, 3});
  EXPECT_EQ(y.value(), x.value());
  Var<double> z = detail::dropout(x, 0.5, ForwardOptions{true, 3});
  int dropped = 0;
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 50; ++j) {
      const double r = z.value()(i, j) / x.value()(i, j);
      if (r == 0.0) ++dropped;
      else EXPECT_DOUBLE_EQ(r, 2.0);
    }
  EXPECT_GT(dropped, 30);
  EXPECT_LT(dropped, 120);
}

TEST(Head, ChannelMismatchThrows) {
  auto cfg = small_config();
  auto p = make_params<double>(cfg);
  Rng rng(11);
  EXPECT_THROW(tcp_forward(random_clip<double>(rng, 6, 5, 10), p, cfg), DimensionError);
}

TEST(Head, ConfigValidation) {
  HeadConfig cfg;
  cfg.kappa = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = HeadConfig{};
  cfg.dim = 4096;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = HeadConfig{};
  cfg.iterations = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(HeadConfig{}.validate());
}

TEST(Head, DefaultKappaFollowsClipLength) {
  EXPECT_EQ(default_kappa(8), 5);
  EXPECT_EQ(default_kappa(16), 9);
}

TEST(Accounting, ComponentCounts) {
  HeadConfig cfg;
  std::map<std::string, std::int64_t> ledger;
  for (const auto& e : parameter_ledger(cfg)) ledger[e.component] = e.count;
  EXPECT_EQ(ledger["classifier"], 3302800);
  EXPECT_EQ(ledger["proj"], 262272);
  EXPECT_EQ(ledger["kernel"], 5 * 128 * 128);
}

TEST(Accounting, EnumerationMatchesLedger) {
  HeadConfig cfg;
  auto p = make_params<float>(cfg);
  EXPECT_EQ(count_params(p), ledger_total(parameter_ledger(cfg)));
  EXPECT_EQ(count_params(p), 3674200);
  for (Variant v : {Variant::Gap, Variant::PlainGcpMpn}) {
    cfg.variant = v;
    auto q = make_params<float>(cfg);
    EXPECT_EQ(count_params(q), ledger_total(parameter_ledger(cfg)));
  }
}

TEST(Accounting, FlopLedgerSumsToTotal) {
  HeadConfig cfg;
  EXPECT_EQ(count_flops(cfg), ledger_total(flop_ledger(cfg)));
  EXPECT_GT(count_flops(cfg), 0);
}

TEST(Accounting, ParameterNamesAreUnique) {
  auto p = make_params<double>(small_config());
  auto list = parameter_list(p);
  EXPECT_EQ(list.size(), 2u + 6u + 2u + 4u + 3u + 2u);
}

TEST(HeadGradients, WithinTolerance) {
  for (const GradCase& c : run_grad_checks(GradScope::Head, 4)) {
    EXPECT_LE(c.report.max_rel_error, 1e-4) << c.name;
  }
}
