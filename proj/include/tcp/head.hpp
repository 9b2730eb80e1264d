#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tcp/attention.hpp"
#include "tcp/config.hpp"
#include "tcp/spectral.hpp"
#include "tcp/tconv.hpp"

namespace tcp {

// Learnable state of a head. Members a variant does not use stay empty:
// gap uses only the classifier, plain GCP + MPN adds the projection, TCP
// uses everything (attention members only when enabled).
template <typename T>
struct TcpParams {
  AffineMap<T> proj;
  TsaParams<T> tsa;
  TcaParams<T> tca;
  TemporalKernel<T> kernel;
  AffineMap<T> classifier;
  int iterations = 3;
  double dropout_rate = 0.5;

  bool has_attention() const { return !tsa.phi0.empty(); }
};

template <typename T>
TcpParams<T> make_params(const HeadConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  TcpParams<T> p;
  p.iterations = cfg.iterations;
  p.dropout_rate = cfg.dropout;
  if (cfg.variant != Variant::Gap) {
    p.proj = make_affine<T>("proj", cfg.channels, cfg.dim, rng);
  }
  if (cfg.variant == Variant::Tcp) {
    if (cfg.attention) {
      p.tsa = make_tsa_params<T>("tsa", cfg.dim, cfg.key_width(), rng);
      p.tca = make_tca_params<T>("tca", cfg.dim, cfg.reduction, rng);
    }
    p.kernel = make_temporal_kernel<T>(cfg.dim, cfg.kappa, rng);
  }
  p.classifier = make_affine<T>("classifier", cfg.representation_dim(), cfg.num_classes, rng,
                                cfg.classifier_gain);
  return p;
}

// Visits every non-empty parameter in a fixed order.
template <typename T, typename F>
void for_each_parameter(TcpParams<T>& p, F&& f) {
  auto affine = [&](AffineMap<T>& m) {
    if (m.empty()) return;
    f(m.weight);
    f(m.bias);
  };
  affine(p.proj);
  if (p.has_attention()) {
    affine(p.tsa.phi0);
    affine(p.tsa.phi_m1);
    affine(p.tsa.phi_m2);
    f(p.tsa.norm.scale);
    f(p.tsa.norm.shift);
    affine(p.tca.fc1);
    affine(p.tca.fc2);
  }
  for (auto& w : p.kernel.taps) f(w);
  affine(p.classifier);
}

template <typename T>
std::vector<Parameter<T>*> parameter_list(TcpParams<T>& p) {
  std::vector<Parameter<T>*> out;
  std::set<std::string> names;
  for_each_parameter(p, [&](Parameter<T>& q) {
    if (!names.insert(q.name).second) throw IntegrityError("duplicate parameter name " + q.name);
    out.push_back(&q);
  });
  return out;
}

template <typename T>
std::int64_t count_params(TcpParams<T>& p) {
  std::int64_t n = 0;
  for_each_parameter(p, [&](Parameter<T>& q) {
    if (q.trainable) n += q.size();
  });
  return n;
}

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

namespace detail {

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, const ForwardOptions& opt) {
  if (!opt.training || rate <= 0.0) return x;
  Rng rng(opt.dropout_seed);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Matrix<T> mask(x.rows(), x.cols());
  for (Index j = 0; j < mask.cols(); ++j)
    for (Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng.uniform(0.0, 1.0) < rate ? T(0) : keep_scale;
  return mul(x, x.tape().constant(std::move(mask)));
}

template <typename T>
void check_clip_width(const std::vector<Var<T>>& frames, const HeadConfig& cfg) {
  if (frames.empty()) throw DimensionError("empty clip");
  for (const auto& f : frames) {
    if (f.cols() != cfg.channels) {
      throw DimensionError("clip has " + std::to_string(f.cols()) + " channels, head expects " +
                           std::to_string(cfg.channels));
    }
  }
}

}  // namespace detail

// Pooled representation of each clip, one row per clip (before dropout).
template <typename T>
Var<T> forward_representation(std::span<const std::vector<Var<T>>> clips, TcpParams<T>& p,
                              const HeadConfig& cfg, const ForwardOptions& opt) {
  if (clips.empty()) throw DimensionError("empty batch");
  for (const auto& c : clips) detail::check_clip_width(c, cfg);

  std::vector<Var<T>> rows;
  if (cfg.variant == Variant::Gap) {
    for (const auto& frames : clips) rows.push_back(gap<T>(frames));
    return concat_rows<T>(rows);
  }

  std::vector<std::vector<Var<T>>> projected;
  for (const auto& frames : clips) {
    std::vector<Var<T>> out;
    for (const auto& f : frames) out.push_back(p.proj(f));
    projected.push_back(std::move(out));
  }

  if (cfg.variant == Variant::PlainGcpMpn) {
    for (const auto& frames : projected) {
      Var<T> cov = plain_gcp<T>(frames, cfg.centered);
      rows.push_back(triangulate(newton_schulz(cov, p.iterations).sqrt));
    }
    return concat_rows<T>(rows);
  }

  std::vector<std::vector<Var<T>>> features =
      p.has_attention() ? calibrate<T>(projected, p.tsa, p.tca, opt.training) : projected;
  for (auto& frames : features) {
    if (cfg.centered) {
      for (auto& f : frames) f = sub(f, mean_over(f, 0));
    }
    Var<T> cov = tcp_pool_efficient<T>(frames, p.kernel);
    rows.push_back(triangulate(newton_schulz(cov, p.iterations).sqrt));
  }
  return concat_rows<T>(rows);
}

// Logits (batch x num_classes) for clips given as tape values.
template <typename T>
Var<T> forward_logits(std::span<const std::vector<Var<T>>> clips, TcpParams<T>& p,
                      const HeadConfig& cfg, const ForwardOptions& opt) {
  Var<T> rep = forward_representation(clips, p, cfg, opt);
  return p.classifier(detail::dropout(rep, p.dropout_rate, opt));
}

template <typename T>
std::vector<std::vector<Var<T>>> bind_clips(Tape<T>& tape, std::span<const FeatureClip<T>> clips) {
  std::vector<std::vector<Var<T>>> out;
  for (const auto& c : clips) {
    c.validate();
    std::vector<Var<T>> frames;
    for (const auto& f : c.frames) frames.push_back(tape.constant(f));
    out.push_back(std::move(frames));
  }
  return out;
}

template <typename T>
Var<T> forward_logits(Tape<T>& tape, std::span<const FeatureClip<T>> clips, TcpParams<T>& p,
                      const HeadConfig& cfg, const ForwardOptions& opt) {
  auto bound = bind_clips(tape, clips);
  return forward_logits<T>(bound, p, cfg, opt);
}

// ---- eager forms ----

template <typename T>
RowVector<T> tcp_forward(const FeatureClip<T>& clip, TcpParams<T>& p, const HeadConfig& cfg,
                         const ForwardOptions& opt = {}) {
  if (cfg.variant != Variant::Tcp) throw ConfigError("tcp_forward needs the tcp variant");
  Tape<T> tape;
  return forward_logits<T>(tape, std::span<const FeatureClip<T>>(&clip, 1), p, cfg, opt).value();
}

template <typename T>
RowVector<T> baseline_forward(const FeatureClip<T>& clip, Variant variant, TcpParams<T>& p,
                              HeadConfig cfg, const ForwardOptions& opt = {}) {
  if (variant == Variant::Tcp) throw ConfigError("baseline_forward takes gap or gcp");
  cfg.variant = variant;
  Tape<T> tape;
  return forward_logits<T>(tape, std::span<const FeatureClip<T>>(&clip, 1), p, cfg, opt).value();
}

template <typename T>
PooledRepresentation<T> pooled_representation(const FeatureClip<T>& clip, TcpParams<T>& p,
                                              const HeadConfig& cfg) {
  Tape<T> tape;
  auto bound = bind_clips(tape, std::span<const FeatureClip<T>>(&clip, 1));
  RowVector<T> v = forward_representation<T>(bound, p, cfg, ForwardOptions{}).value();
  PoolKind kind = cfg.variant == Variant::Gap           ? PoolKind::Gap
                  : cfg.variant == Variant::PlainGcpMpn ? PoolKind::PlainGcp
                                                        : PoolKind::Tcp;
  return {v, kind};
}

// ---- accounting (closed-form, independent of parameter enumeration) ----

struct LedgerEntry {
  std::string component;
  std::int64_t count = 0;
};

// Parameter counts per component computed from the configuration alone.
std::vector<LedgerEntry> parameter_ledger(const HeadConfig& cfg);

// Forward FLOPs per clip: 2mnk per (m x k)(k x n) product plus one per
// elementwise output (see accounting.cpp for the itemization).
std::vector<LedgerEntry> flop_ledger(const HeadConfig& cfg);
std::int64_t count_flops(const HeadConfig& cfg);

std::int64_t ledger_total(const std::vector<LedgerEntry>& ledger);

}  // namespace tcp
