#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "tcp/train.hpp"

using namespace tcp;
using tcp::testing::rel_frobenius;

namespace {

SyntheticSpec small_spec(std::uint64_t seed = 0) {
  SyntheticSpec s;
  s.num_samples = 64;
  s.frames = 6;
  s.positions = 8;
  s.channels = 8;
  s.seed = seed;
  return s;
}

HeadConfig head_for(const SyntheticSpec& s, Variant v) {
  HeadConfig cfg;
  cfg.variant = v;
  cfg.channels = s.channels;
  cfg.dim = 8;
  cfg.frames = s.frames;
  cfg.positions = s.positions;
  cfg.kappa = 3;
  cfg.num_classes = 2;
  cfg.key_ratio = 2;
  cfg.reduction = 2;
  return cfg;
}

Parameter<double> scalar_param(const std::string& name, double v, bool decay = true) {
  return Parameter<double>{name, Matrix<double>::Constant(1, 1, v), true, decay};
}

}  // namespace

TEST(Sgd, NoMomentumNoDecayIsGradientStep) {
  auto p = scalar_param("w", 1.0);
  OptimState<double> opt;
  opt.config.learning_rate = 0.1;
  opt.config.momentum = 0.0;
  opt.config.weight_decay = 0.0;
  std::vector<Parameter<double>*> ps{&p};
  std::vector<Matrix<double>> gs{Matrix<double>::Constant(1, 1, 2.0)};
  sgd_step<double>(ps, gs, opt);
  EXPECT_DOUBLE_EQ(p.value(0, 0), 1.0 - 0.1 * 2.0);
}

TEST(Sgd, TwoMomentumStepsWithConstantGradient) {
  auto p = scalar_param("w", 0.0);
  OptimState<double> opt;
  opt.config.learning_rate = 0.1;
  opt.config.momentum = 0.9;
  opt.config.weight_decay = 0.0;
  std::vector<Parameter<double>*> ps{&p};
  std::vector<Matrix<double>> gs{Matrix<double>::Constant(1, 1, 1.0)};
  sgd_step<double>(ps, gs, opt);
  sgd_step<double>(ps, gs, opt);
  EXPECT_NEAR(p.value(0, 0), -0.1 * 1.0 * (1 + 1.9), 1e-15);
}

TEST(Sgd, MatchesScalarRecurrence) {
  Rng rng(1);
  Parameter<double> p{"w", rng.normal_matrix<double>(3, 4), true, true};
  OptimState<double> opt;
  opt.config.learning_rate = 0.05;
  opt.config.weight_decay = 1e-2;
  Matrix<double> theta = p.value;
  Matrix<double> v = Matrix<double>::Zero(3, 4);
  std::vector<Parameter<double>*> ps{&p};
  for (int step = 0; step < 25; ++step) {
    Matrix<double> g = rng.normal_matrix<double>(3, 4);
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 4; ++j) {
        v(i, j) = 0.9 * v(i, j) + g(i, j) + 1e-2 * theta(i, j);
        theta(i, j) -= 0.05 * v(i, j);
      }
    std::vector<Matrix<double>> gs{g};
    sgd_step<double>(ps, gs, opt);
  }
  EXPECT_LE((p.value - theta).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sgd, DecayExcludedParametersMatchNoDecayUpdate) {
  Rng rng(2);
  Matrix<double> init = rng.normal_matrix<double>(1, 5);
  Parameter<double> shift{"norm.shift", init, true, false};
  Parameter<double> reference{"ref", init, true, true};
  OptimState<double> with_decay, without_decay;
  with_decay.config.weight_decay = 0.5;
  without_decay.config.weight_decay = 0.0;
  for (int step = 0; step < 5; ++step) {
    std::vector<Matrix<double>> gs{rng.normal_matrix<double>(1, 5)};
    std::vector<Parameter<double>*> a{&shift};
    std::vector<Parameter<double>*> b{&reference};
    sgd_step<double>(a, gs, with_decay);
    sgd_step<double>(b, gs, without_decay);
  }
  EXPECT_EQ(shift.value, reference.value);
}

TEST(Sgd, RejectsNonFiniteGradient) {
  auto p = scalar_param("w", 1.0);
  OptimState<double> opt;
  std::vector<Parameter<double>*> ps{&p};
  std::vector<Matrix<double>> gs{Matrix<double>::Constant(1, 1, std::nan(""))};
  EXPECT_THROW(sgd_step<double>(ps, gs, opt), NumericError);
  EXPECT_EQ(p.value(0, 0), 1.0);
  gs[0] = Matrix<double>::Zero(2, 1);
  EXPECT_THROW(sgd_step<double>(ps, gs, opt), DimensionError);
}

TEST(Sgd, StepDecaySchedule) {
  OptimState<double> opt;
  opt.config.learning_rate = 0.01;
  opt.epoch = 119;
  EXPECT_DOUBLE_EQ(opt.learning_rate(), 0.01);
  opt.epoch = 120;
  EXPECT_NEAR(opt.learning_rate(), 0.001, 1e-18);
}

TEST(Synthetic, LabelsAreBalanced) {
  for (auto task : {SyntheticTask::OrderPair, SyntheticTask::MotionDirection}) {
    auto spec = small_spec();
    spec.task = task;
    auto data = gen_synthetic<double>(spec);
    ASSERT_EQ(data.size(), 64u);
    EXPECT_EQ(std::count(data.labels.begin(), data.labels.end(), 0), 32);
    EXPECT_EQ(std::count(data.labels.begin(), data.labels.end(), 1), 32);
  }
}

TEST(Synthetic, OrderlessPoolingIdenticalWithinPair) {
  auto data = gen_synthetic<double>(small_spec(3));
  for (std::size_t i = 0; i < data.size(); i += 2) {
    ASSERT_EQ(data.labels[i], 0);
    ASSERT_EQ(data.labels[i + 1], 1);
    EXPECT_LE(rel_frobenius(gap(data.clips[i]).vec, gap(data.clips[i + 1]).vec), 1e-12);
    EXPECT_LE(rel_frobenius(plain_gcp(data.clips[i]).mat, plain_gcp(data.clips[i + 1]).mat), 1e-12);
    for (Index l = 0; l < 6; ++l) EXPECT_EQ(data.clips[i].frames[l], data.clips[i + 1].frames[5 - l]);
  }
}

TEST(Synthetic, DeterministicPerSeed) {
  auto a = gen_synthetic<float>(small_spec(4));
  auto b = gen_synthetic<float>(small_spec(4));
  auto c = gen_synthetic<float>(small_spec(5));
  EXPECT_EQ(a.clips[7].frames[2], b.clips[7].frames[2]);
  EXPECT_NE(a.clips[7].frames[2], c.clips[7].frames[2]);
}

TEST(Synthetic, MotionDirectionTranslatesBump) {
  auto spec = small_spec();
  spec.task = SyntheticTask::MotionDirection;
  spec.positions = 32;
  auto data = gen_synthetic<double>(spec);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& clip = data.clips[i];
    EXPECT_EQ(clip.spatial, std::make_pair(Index{1}, Index{32}));
    // Four frames at speed >= 0.5 move the peak at least two positions.
    Index p0 = 0, p1 = 0;
    clip.frames[0].col(0).cwiseAbs().maxCoeff(&p0);
    clip.frames[4].col(0).cwiseAbs().maxCoeff(&p1);
    double step = static_cast<double>(p1) - static_cast<double>(p0);
    if (step > 16) step -= 32;
    if (step < -16) step += 32;
    EXPECT_EQ(step > 0 ? 0 : 1, data.labels[i]) << "clip " << i;
  }
}

TEST(Synthetic, InvalidSpecThrows) {
  auto spec = small_spec();
  spec.num_samples = 63;
  EXPECT_THROW(gen_synthetic<double>(spec), ConfigError);
  spec = small_spec();
  spec.noise_sigma = -1;
  EXPECT_THROW(gen_synthetic<double>(spec), ConfigError);
}

TEST(Split, KeepsPairsTogether) {
  auto data = gen_synthetic<double>(small_spec());
  auto [train, val] = split_dataset(data, 0.25);
  EXPECT_EQ(train.size() + val.size(), data.size());
  EXPECT_EQ(val.size(), 16u);
  for (std::size_t i = 0; i < val.size(); i += 2) {
    EXPECT_EQ(val.labels[i], 0);
    EXPECT_EQ(val.labels[i + 1], 1);
    EXPECT_EQ(val.clips[i].frames.front(), val.clips[i + 1].frames.back());
  }
}

TEST(TrainLoop, FirstBatchLossNearChance) {
  auto spec = small_spec();
  auto cfg = head_for(spec, Variant::Tcp);
  cfg.classifier_gain = 1e-3;
  auto data = gen_synthetic<double>(spec);
  auto p = make_params<double>(cfg);
  Tape<double> tape;
  std::vector<FeatureClip<double>> batch(data.clips.begin(), data.clips.begin() + 32);
  std::vector<int> labels(data.labels.begin(), data.labels.begin() + 32);
  Var<double> loss = cross_entropy<double>(forward_logits<double>(tape, batch, p, cfg, ForwardOptions{true, 1}), labels);
  EXPECT_NEAR(loss.value()(0, 0), std::log(2.0), 0.1);
}

TEST(TrainLoop, DeterministicPerSeed) {
  auto spec = small_spec();
  auto cfg = head_for(spec, Variant::Tcp);
  TrainSettings settings;
  settings.epochs = 3;
  settings.early_stop = false;
  auto a = train_loop<double>(cfg, spec, settings);
  auto b = train_loop<double>(cfg, spec, settings);
  ASSERT_EQ(a.history.size(), 6u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].loss, b.history[i].loss);
    EXPECT_EQ(a.history[i].split, i % 2 == 0 ? "train" : "val");
  }
  EXPECT_EQ(a.params.classifier.weight.value, b.params.classifier.weight.value);
}

TEST(TrainLoop, DoesNotMutateDataset) {
  auto spec = small_spec();
  auto cfg = head_for(spec, Variant::Tcp);
  auto [train, val] = split_dataset(gen_synthetic<double>(spec), 0.25);
  const auto train_copy = train;
  TrainSettings settings;
  settings.epochs = 2;
  train_loop<double>(cfg, train, val, settings);
  ASSERT_EQ(train.size(), train_copy.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    EXPECT_EQ(train.labels[i], train_copy.labels[i]);
    for (std::size_t l = 0; l < train.clips[i].frames.size(); ++l)
      EXPECT_EQ(train.clips[i].frames[l], train_copy.clips[i].frames[l]);
  }
}

TEST(TrainLoop, OrderlessHeadsStayAtChance) {
  auto spec = small_spec();
  for (Variant v : {Variant::Gap, Variant::PlainGcpMpn}) {
    TrainSettings settings;
    settings.epochs = 10;
    auto r = train_loop<double>(head_for(spec, v), spec, settings);
    for (const auto& m : r.history) {
      if (m.split != "val") continue;
      EXPECT_GE(m.accuracy, 0.40);
      EXPECT_LE(m.accuracy, 0.60);
    }
  }
}

TEST(TrainLoop, TcpHeadLearnsFrameOrder) {
  SyntheticSpec spec;
  spec.num_samples = 256;
  spec.channels = 16;
  HeadConfig cfg = head_for(spec, Variant::Tcp);
  TrainSettings settings;
  settings.epochs = 60;
  auto r = train_loop<float>(cfg, spec, settings);
  EXPECT_FALSE(r.diverged);
  EXPECT_GE(r.best_val_accuracy, 0.9);
}

TEST(TrainLoop, DivergenceReturnsLastGoodParameters) {
  auto spec = small_spec();
  auto cfg = head_for(spec, Variant::Gap);
  TrainSettings settings;
  settings.epochs = 50;
  settings.early_stop = false;
  settings.sgd.learning_rate = 1e30;
  settings.sgd.momentum = 0.0;
  auto r = train_loop<float>(cfg, spec, settings);
  EXPECT_TRUE(r.diverged);
  EXPECT_TRUE(r.params.classifier.weight.value.allFinite());
  EXPECT_LT(r.epochs_run, 50);
}
