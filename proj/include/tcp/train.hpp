#pragma once

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "tcp/head.hpp"

namespace tcp {

template <typename T>
struct Dataset {
  std::vector<FeatureClip<T>> clips;
  std::vector<int> labels;

  std::size_t size() const { return clips.size(); }
};

namespace detail {

// Random orthogonal matrix (QR of a Gaussian matrix, signs fixed).
template <typename T>
Matrix<T> random_orthogonal(Index n, Rng& rng) {
  Eigen::MatrixXd g = rng.normal_matrix<double>(n, n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd signs = qr.matrixQR().diagonal().array().sign();
  return (q * signs.asDiagonal()).cast<T>();
}

// Channel-space rotation shared by every clip of an order_pair dataset:
// planar rotations by angles in [pi/6, pi/3] in a random basis.
template <typename T>
Matrix<T> order_pair_rotation(Index channels, Rng& rng) {
  Matrix<double> block = Matrix<double>::Identity(channels, channels);
  for (Index i = 0; i + 1 < channels; i += 2) {
    const double angle = rng.uniform(M_PI / 6.0, M_PI / 3.0);
    block(i, i) = std::cos(angle);
    block(i, i + 1) = -std::sin(angle);
    block(i + 1, i) = std::sin(angle);
    block(i + 1, i + 1) = std::cos(angle);
  }
  Matrix<double> basis = random_orthogonal<double>(channels, rng);
  return (basis * block * basis.transpose()).cast<T>();
}

}  // namespace detail

// Deterministic synthetic clips.
//
// order_pair: each base clip follows x_{l+1,n} = rho x_{l,n} R + sqrt(1 - rho^2) e
// with a dataset-wide rotation R, so time has a direction. Class 0 is the
// clip as generated, class 1 the same frames reversed; per-frame noise of
// noise_sigma is added afterwards. With zero noise both classes hold the
// same multiset of frames.
//
// motion_direction: a Gaussian bump with a fixed channel signature moves
// right (class 0) or left (class 1) across N positions, plus noise.
template <typename T>
Dataset<T> gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset<T> data;
  const Index L = spec.frames;
  const Index N = spec.positions;
  const Index C = spec.channels;
  auto noisy = [&](Matrix<T> m) {
    if (spec.noise_sigma > 0) m += rng.normal_matrix<T>(m.rows(), m.cols(), spec.noise_sigma);
    return m;
  };

  if (spec.task == SyntheticTask::OrderPair) {
    const double rho = 0.9;
    const Matrix<T> rotation = detail::order_pair_rotation<T>(C, rng);
    for (Index s = 0; s < spec.num_samples / 2; ++s) {
      std::vector<Matrix<T>> base;
      base.push_back(rng.normal_matrix<T>(N, C));
      for (Index l = 1; l < L; ++l) {
        Matrix<T> next = static_cast<T>(rho) * base.back() * rotation +
                         static_cast<T>(std::sqrt(1 - rho * rho)) * rng.normal_matrix<T>(N, C);
        base.push_back(std::move(next));
      }
      FeatureClip<T> forward, backward;
      for (Index l = 0; l < L; ++l) forward.frames.push_back(noisy(base[l]));
      for (Index l = L; l-- > 0;) backward.frames.push_back(noisy(base[l]));
      data.clips.push_back(std::move(forward));
      data.labels.push_back(0);
      data.clips.push_back(std::move(backward));
      data.labels.push_back(1);
    }
    return data;
  }

  const RowVector<T> signature = rng.normal_matrix<T>(1, C);
  const double width = std::max(1.0, N / 8.0);
  for (Index s = 0; s < spec.num_samples; ++s) {
    const int label = static_cast<int>(s % 2);
    const double direction = label == 0 ? 1.0 : -1.0;
    const double start = rng.uniform(0.0, static_cast<double>(N));
    const double speed = rng.uniform(0.5, 1.5);
    FeatureClip<T> clip;
    clip.spatial = std::make_pair(Index{1}, N);
    for (Index l = 0; l < L; ++l) {
      const double centre = start + direction * speed * static_cast<double>(l);
      Matrix<T> frame(N, C);
      for (Index n = 0; n < N; ++n) {
        // Distance on a ring of N positions.
        double delta = std::fmod(std::abs(static_cast<double>(n) - centre), static_cast<double>(N));
        delta = std::min(delta, N - delta);
        frame.row(n) = static_cast<T>(std::exp(-delta * delta / (2 * width * width))) * signature;
      }
      clip.frames.push_back(noisy(std::move(frame)));
    }
    data.clips.push_back(std::move(clip));
    data.labels.push_back(label);
  }
  return data;
}

// Train/validation split in whole (class 0, class 1) pairs so both
// orderings of a base clip land on the same side.
template <typename T>
std::pair<Dataset<T>, Dataset<T>> split_dataset(const Dataset<T>& data, double val_fraction) {
  const std::size_t pairs = data.size() / 2;
  std::size_t val_pairs = static_cast<std::size_t>(std::lround(pairs * val_fraction));
  val_pairs = std::clamp<std::size_t>(val_pairs, 1, pairs > 1 ? pairs - 1 : 1);
  const std::size_t cut = 2 * (pairs - val_pairs);
  Dataset<T> train, val;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Dataset<T>& dst = i < cut ? train : val;
    dst.clips.push_back(data.clips[i]);
    dst.labels.push_back(data.labels[i]);
  }
  return {std::move(train), std::move(val)};
}

template <typename T>
struct OptimState {
  SgdConfig config;
  std::map<std::string, Matrix<T>> velocity;
  int epoch = 0;

  double learning_rate() const {
    return config.learning_rate * std::pow(config.decay_factor, epoch / config.decay_interval);
  }
};

// v <- mu v + g + lambda theta (lambda = 0 for parameters with decay off)
// theta <- theta - lr v
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, std::span<const Matrix<T>> grads,
              OptimState<T>& opt) {
  if (params.size() != grads.size()) throw DimensionError("sgd_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix<T>& g = grads[i];
    if (g.rows() != params[i]->value.rows() || g.cols() != params[i]->value.cols()) {
      throw DimensionError("sgd_step: gradient shape mismatch for " + params[i]->name);
    }
    if (!g.allFinite()) throw NumericError("non-finite gradient for parameter " + params[i]->name);
  }
  const T lr = static_cast<T>(opt.learning_rate());
  const T mu = static_cast<T>(opt.config.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    if (!p.trainable) continue;
    auto [it, inserted] = opt.velocity.try_emplace(p.name, Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    Matrix<T>& v = it->second;
    const T decay = p.decay ? static_cast<T>(opt.config.weight_decay) : T(0);
    v = mu * v + grads[i] + decay * p.value;
    p.value -= lr * v;
  }
}

struct EpochMetrics {
  int epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
};

template <typename T>
struct TrainResult {
  std::vector<EpochMetrics> history;
  TcpParams<T> params;
  bool diverged = false;
  int epochs_run = 0;
  double final_val_accuracy = 0.0;
  double best_val_accuracy = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

template <typename T>
int argmax_row(const Matrix<T>& m, Index row) {
  Index best = 0;
  m.row(row).maxCoeff(&best);
  return static_cast<int>(best);
}

template <typename T>
EvalResult evaluate(const Dataset<T>& data, TcpParams<T>& params, const HeadConfig& cfg,
                    Index batch_size = 64) {
  EvalResult r;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(batch_size));
    std::span<const FeatureClip<T>> clips(data.clips.data() + begin, end - begin);
    std::span<const int> labels(data.labels.data() + begin, end - begin);
    Tape<T> tape;
    Var<T> logits = forward_logits<T>(tape, clips, params, cfg, ForwardOptions{});
    r.loss += static_cast<double>(cross_entropy(logits, labels).value()(0, 0)) * (end - begin);
    for (std::size_t i = 0; i < end - begin; ++i) {
      if (argmax_row(logits.value(), static_cast<Index>(i)) == labels[i]) ++correct;
    }
  }
  r.loss /= static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

// Mini-batch SGD with cross-entropy (mean over the batch). Emits one train
// and one val record per epoch; stops early at 100% validation accuracy.
// On a non-finite loss or gradient the parameters of the last completed
// epoch are returned with diverged = true.
template <typename T>
TrainResult<T> train_loop(const HeadConfig& cfg, const Dataset<T>& train, const Dataset<T>& val,
                          const TrainSettings& settings,
                          const std::function<void(const EpochMetrics&)>& sink = {}) {
  cfg.validate();
  settings.validate();
  if (train.size() == 0 || val.size() == 0) throw ConfigError("empty train or validation split");
  if (train.clips[0].channels() != cfg.channels) {
    throw ConfigError("dataset has " + std::to_string(train.clips[0].channels()) +
                      " channels, head expects " + std::to_string(cfg.channels));
  }

  TrainResult<T> result;
  result.params = make_params<T>(cfg);
  TcpParams<T> last_good = result.params;
  OptimState<T> opt;
  opt.config = settings.sgd;
  Rng rng(settings.seed);

  auto emit = [&](EpochMetrics m) {
    result.history.push_back(m);
    if (sink) sink(m);
  };

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    opt.epoch = epoch;
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    bool failed = false;
    for (std::size_t begin = 0; begin < order.size() && !failed;
         begin += static_cast<std::size_t>(settings.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(settings.batch_size));
      std::vector<FeatureClip<T>> clips;
      std::vector<int> labels;
      for (std::size_t i = begin; i < end; ++i) {
        clips.push_back(train.clips[order[i]]);
        labels.push_back(train.labels[order[i]]);
      }
      Tape<T> tape;
      Var<T> logits = forward_logits<T>(tape, clips, result.params, cfg,
                                        ForwardOptions{true, rng.next()});
      Var<T> loss = cross_entropy<T>(logits, labels);
      const double lv = static_cast<double>(loss.value()(0, 0));
      if (!std::isfinite(lv)) {
        failed = true;
        break;
      }
      tape.backward(loss);
      auto params = parameter_list(result.params);
      std::vector<Matrix<T>> grads;
      for (auto* p : params) grads.push_back(tape.grad(*p));
      try {
        sgd_step<T>(params, grads, opt);
      } catch (const NumericError&) {
        failed = true;
        break;
      }
      loss_sum += lv * static_cast<double>(end - begin);
      for (std::size_t i = 0; i < end - begin; ++i) {
        if (argmax_row(logits.value(), static_cast<Index>(i)) == labels[i]) ++correct;
      }
    }
    // A finite loss does not rule out an update that overflowed the weights.
    for_each_parameter(result.params, [&](Parameter<T>& p) {
      if (!p.value.allFinite()) failed = true;
    });
    EvalResult v;
    if (!failed) {
      v = evaluate(val, result.params, cfg);
      failed = !std::isfinite(v.loss);
    }
    if (failed) {
      result.diverged = true;
      result.params = last_good;
      break;
    }
    emit({epoch, "train", loss_sum / train.size(), static_cast<double>(correct) / train.size()});
    emit({epoch, "val", v.loss, v.accuracy});
    result.epochs_run = epoch + 1;
    result.final_val_accuracy = v.accuracy;
    result.best_val_accuracy = std::max(result.best_val_accuracy, v.accuracy);
    last_good = result.params;
    if (settings.early_stop && v.accuracy >= 1.0) break;
  }
  return result;
}

template <typename T>
TrainResult<T> train_loop(const HeadConfig& cfg, const SyntheticSpec& spec,
                          const TrainSettings& settings,
                          const std::function<void(const EpochMetrics&)>& sink = {}) {
  auto [train, val] = split_dataset(gen_synthetic<T>(spec), settings.val_fraction);
  return train_loop<T>(cfg, train, val, settings, sink);
}

}  // namespace tcp
