#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>

#include "json.hpp"
#include "tcp/diagnostics.hpp"
#include "tcp/io.hpp"
#include "tcp/train.hpp"

namespace tcp::cli {

namespace {

DType parse_dtype(const std::string& s) {
  if (s == "single" || s == "float32") return DType::Single;
  if (s == "double" || s == "float64") return DType::Double;
  throw ConfigError("unknown dtype '" + s + "' (expected single or double)");
}

template <typename V>
void require_match(const char* flag, const std::optional<V>& given, V stored) {
  if (given && *given != stored) {
    throw ConfigError(std::string(flag) + " conflicts with the checkpoint (" +
                      std::to_string(*given) + " vs " + std::to_string(stored) + ")");
  }
}

HeadConfig pool_config(const PoolArgs& a, const Shape& clip_shape, std::optional<Checkpoint>& ckpt) {
  const Variant variant = parse_variant(a.variant);
  HeadConfig cfg;
  if (!a.params.empty()) {
    ckpt = read_checkpoint(a.params);
    cfg = ckpt->config;
    if (cfg.variant != variant) {
      throw ConfigError("--variant " + a.variant + " conflicts with checkpoint variant " +
                        to_string(cfg.variant));
    }
    require_match("--d", a.dim, static_cast<long>(cfg.dim));
    require_match("--kappa", a.kappa, cfg.kappa);
    require_match("--K", a.iterations, cfg.iterations);
    if (a.centered && !cfg.centered) throw ConfigError("--centered conflicts with the checkpoint");
    if (a.no_attention && cfg.attention) throw ConfigError("--no-attention conflicts with the checkpoint");
  } else {
    cfg.variant = variant;
    cfg.channels = static_cast<Index>(clip_shape[2]);
    cfg.frames = static_cast<Index>(clip_shape[0]);
    cfg.positions = static_cast<Index>(clip_shape[1]);
    cfg.dim = a.dim.value_or(128);
    cfg.kappa = a.kappa.value_or(default_kappa(cfg.frames));
    cfg.iterations = a.iterations.value_or(3);
    cfg.centered = a.centered;
    cfg.attention = !a.no_attention;
    cfg.seed = a.seed;
  }
  cfg.validate();
  if (static_cast<Index>(clip_shape[2]) != cfg.channels) {
    throw DimensionError("clip has " + std::to_string(clip_shape[2]) + " channels, head expects " +
                         std::to_string(cfg.channels));
  }
  return cfg;
}

template <typename T>
RowVector<T> pool_as(const ClipRecord& rec, const HeadConfig& cfg, const std::optional<Checkpoint>& ckpt) {
  FeatureClip<T> clip = to_feature_clip<T>(rec);
  TcpParams<T> p = ckpt ? params_from_checkpoint<T>(*ckpt) : make_params<T>(cfg);
  return pooled_representation(clip, p, cfg).vec;
}

}  // namespace

int run_pool(const PoolArgs& a) {
  const auto start = std::chrono::steady_clock::now();
  ClipRecord rec = read_clip_file(a.input);
  const Shape shape = std::visit([](const auto& t) { return t.shape(); }, rec.frames);
  std::optional<Checkpoint> ckpt;
  const HeadConfig cfg = pool_config(a, shape, ckpt);

  AnyTensor out;
  if (parse_dtype(a.dtype) == DType::Single) {
    out = Tensor<float>::from_matrix(pool_as<float>(rec, cfg, ckpt));
  } else {
    out = Tensor<double>::from_matrix(pool_as<double>(rec, cfg, ckpt));
  }
  const Shape out_shape = std::visit([](const auto& t) { return t.shape(); }, out);
  if (!a.out.empty()) write_tensor_file(a.out, out);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("variant %s  input %s  output %s  seed %llu  time %.3f s\n", to_string(cfg.variant).c_str(),
              shape_string(shape).c_str(), shape_string(out_shape).c_str(),
              static_cast<unsigned long long>(cfg.seed), secs);
  return kOk;
}

int run_equivalence(const EquivalenceArgs& a) {
  if (a.trials < 0) throw ConfigError("--trials must be >= 0");
  EquivalenceGrid grid;
  grid.frames.assign(a.frames.begin(), a.frames.end());
  grid.positions.assign(a.positions.begin(), a.positions.end());
  grid.dims.assign(a.dims.begin(), a.dims.end());
  grid.kappas = a.kappas;
  grid.trials = a.trials;
  grid.seed = a.seed;
  grid.dtype = parse_dtype(a.dtype);
  grid.inject_fault = a.inject_fault;
  for (long v : a.frames)
    if (v < 1) throw ConfigError("--frames entries must be positive");
  for (long v : a.positions)
    if (v < 1) throw ConfigError("--positions entries must be positive");
  for (long v : a.dims)
    if (v < 1) throw ConfigError("--dims entries must be positive");

  const EquivalenceReport r = run_equivalence(grid);
  std::printf("equivalence  dtype %s  seed %llu  cases %zu\n", a.dtype.c_str(),
              static_cast<unsigned long long>(a.seed), r.cases);
  if (r.cases == 0) {
    std::printf("no cases run\n");
    return kOk;
  }
  std::printf("max relative discrepancy %.3e  (tolerance %.0e)\n", r.max_discrepancy, r.tolerance);
  if (!r.passed()) {
    std::printf("FAIL at L=%ld N=%ld d=%ld kappa=%d trial=%d\n", static_cast<long>(r.worst.frames),
                static_cast<long>(r.worst.positions), static_cast<long>(r.worst.dim), r.worst.kappa,
                r.worst.trial);
    return kCheckFailed;
  }
  std::printf("ok\n");
  return kOk;
}

int run_gradcheck(const GradcheckArgs& a) {
  std::vector<GradScope> scopes;
  if (a.scope == "all") {
    scopes = {GradScope::Primitive, GradScope::Attention, GradScope::TemporalConv, GradScope::Spectral,
              GradScope::Head};
  } else {
    scopes = {parse_grad_scope(a.scope)};
  }
  std::printf("gradcheck  scope %s  seed %llu  h 1e-05\n", a.scope.c_str(),
              static_cast<unsigned long long>(a.seed));
  std::printf("%-10s %-30s %12s %8s  %s\n", "scope", "case", "max_rel_err", "tol", "status");
  bool ok = true;
  double worst = 0.0;
  for (GradScope s : scopes) {
    for (const GradCase& c : run_grad_checks(s, a.seed)) {
      ok = ok && c.passed();
      worst = std::max(worst, c.report.max_rel_error);
      std::printf("%-10s %-30s %12.3e %8.0e  %s", to_string(s).c_str(), c.name.c_str(),
                  c.report.max_rel_error, c.tolerance, c.passed() ? "ok" : "FAIL");
      if (!c.passed()) std::printf(" (%s[%ld])", c.report.worst_parameter.c_str(), static_cast<long>(c.report.worst_index));
      std::printf("\n");
    }
  }
  std::printf("max relative error %.3e: %s\n", worst, ok ? "ok" : "FAIL");
  return ok ? kOk : kCheckFailed;
}

int run_sqrt_bench(const SqrtBenchArgs& a) {
  if (a.dim < 1) throw ConfigError("--d must be positive");
  if (a.iterations.empty()) throw ConfigError("--K needs at least one value");
  for (int k : a.iterations)
    if (k < 0) throw ConfigError("--K values must be >= 0");
  const Matrix<double> spd = random_spd(a.dim, a.cond, a.seed);
  const auto rows = sqrt_bench(spd, a.iterations);
  std::printf("sqrt-bench  d %ld  cond %g  seed %llu\n", a.dim, a.cond,
              static_cast<unsigned long long>(a.seed));
  std::printf("%4s %14s %14s\n", "K", "residual", "oracle_err");
  for (const auto& r : rows) std::printf("%4d %14.6e %14.6e\n", r.iterations, r.residual, r.oracle_error);
  const bool ok = residual_converges(rows);
  std::printf("residual non-increasing and final <= 1e-06: %s\n", ok ? "ok" : "FAIL");
  return ok ? kOk : kCheckFailed;
}

int run_train(const TrainArgs& a) {
  const KeyValues kv = read_key_values(a.config);
  check_known_keys(kv);
  SyntheticSpec spec;
  apply(kv, spec);
  HeadConfig cfg;
  cfg.channels = spec.channels;
  cfg.frames = spec.frames;
  cfg.positions = spec.positions;
  cfg.num_classes = spec.num_classes;
  apply(kv, cfg);
  TrainSettings settings;
  apply(kv, settings);
  if (a.seed) {
    spec.seed = cfg.seed = settings.seed = *a.seed;
  }
  if (cfg.channels != spec.channels || cfg.num_classes != spec.num_classes) {
    throw ConfigError("head channels/classes do not match the dataset");
  }

  auto sink = [](const EpochMetrics& m) {
    nlohmann::json j = {{"epoch", m.epoch}, {"split", m.split}, {"loss", m.loss}, {"accuracy", m.accuracy}};
    std::cout << j.dump() << '\n' << std::flush;
  };
  TrainResult<float> r = train_loop<float>(cfg, spec, settings, sink);
  nlohmann::json summary = {{"summary", true},
                            {"variant", to_string(cfg.variant)},
                            {"seed", settings.seed},
                            {"epochs_run", r.epochs_run},
                            {"final_val_accuracy", r.final_val_accuracy},
                            {"best_val_accuracy", r.best_val_accuracy},
                            {"diverged", r.diverged}};
  std::cout << summary.dump() << '\n';
  if (!a.checkpoint.empty()) write_checkpoint(a.checkpoint, make_checkpoint(cfg, r.params));
  if (r.diverged) {
    std::cerr << "training diverged; last good parameters kept\n";
    return kCheckFailed;
  }
  return kOk;
}

int run_info(const InfoArgs& a) {
  HeadConfig cfg;
  std::optional<Checkpoint> ckpt;
  if (!a.params.empty()) {
    ckpt = read_checkpoint(a.params);
    cfg = ckpt->config;
  }
  TcpParams<double> p = ckpt ? params_from_checkpoint<double>(*ckpt) : make_params<double>(cfg);

  // Enumerated counts grouped the same way as the closed-form ledger.
  std::map<std::string, std::int64_t> enumerated;
  for_each_parameter(p, [&](Parameter<double>& q) {
    std::string group = q.name.substr(0, q.name.rfind('.'));
    if (group.rfind("kernel", 0) == 0) group = "kernel";
    enumerated[group] += q.size();
  });

  const auto ledger = parameter_ledger(cfg);
  std::printf("config  variant %s  C %ld  d %ld  L %ld  N %ld  kappa %d  K %d  classes %d  seed %llu\n",
              to_string(cfg.variant).c_str(), static_cast<long>(cfg.channels), static_cast<long>(cfg.dim),
              static_cast<long>(cfg.frames), static_cast<long>(cfg.positions), cfg.kappa, cfg.iterations,
              cfg.num_classes, static_cast<unsigned long long>(cfg.seed));
  std::printf("\n%-14s %14s %14s\n", "component", "ledger", "enumerated");
  bool ok = true;
  for (const auto& e : ledger) {
    const std::int64_t n = enumerated.count(e.component) ? enumerated[e.component] : 0;
    ok = ok && n == e.count;
    std::printf("%-14s %14lld %14lld%s\n", e.component.c_str(), static_cast<long long>(e.count),
                static_cast<long long>(n), n == e.count ? "" : "  MISMATCH");
  }
  const std::int64_t total = ledger_total(ledger);
  const std::int64_t counted = count_params(p);
  ok = ok && total == counted && enumerated.size() == ledger.size();
  std::printf("%-14s %14lld %14lld\n", "total", static_cast<long long>(total), static_cast<long long>(counted));

  std::printf("\n%-14s %16s\n", "flops", "count");
  for (const auto& e : flop_ledger(cfg)) {
    std::printf("%-14s %16lld\n", e.component.c_str(), static_cast<long long>(e.count));
  }
  const std::int64_t flops = count_flops(cfg);
  std::printf("%-14s %16lld\n", "total", static_cast<long long>(flops));

  std::printf("\nreference figures for the original head: 3.3M parameters, 1.2G FLOPs (8 frames, 224x224)\n");
  std::printf("this configuration: %.2fM parameters, %.2fG FLOPs (informational; the attention widths\n"
              "and gate bottleneck behind the reference figures are not fixed, so exact agreement is not expected)\n",
              static_cast<double>(counted) / 1e6, static_cast<double>(flops) / 1e9);
  std::printf("ledger vs enumeration: %s\n", ok ? "exact match" : "MISMATCH");
  return ok ? kOk : kCheckFailed;
}

int run_init(const InitArgs& a) {
  HeadConfig cfg;
  if (!a.config.empty()) {
    const KeyValues kv = read_key_values(a.config);
    check_known_keys(kv);
    apply(kv, cfg);
  }
  cfg.validate();
  TcpParams<double> p = make_params<double>(cfg);
  write_checkpoint(a.out, make_checkpoint(cfg, p));
  std::printf("wrote %s  variant %s  parameters %lld\n", a.out.c_str(), to_string(cfg.variant).c_str(),
              static_cast<long long>(count_params(p)));
  return kOk;
}

int run_synth(const SynthArgs& a) {
  if (a.frames < 1 || a.positions < 1 || a.channels < 1) throw ConfigError("clip sizes must be positive");
  if ((a.height > 0) != (a.width > 0)) throw ConfigError("--height and --width go together");
  if (a.height > 0 && a.height * a.width != a.positions) throw DimensionError("height * width must equal positions");
  Rng rng(a.seed);
  const Shape shape{static_cast<std::size_t>(a.frames), static_cast<std::size_t>(a.positions),
                    static_cast<std::size_t>(a.channels)};
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = rng.normal();
  ClipRecord rec;
  if (parse_dtype(a.dtype) == DType::Single) {
    rec.frames = Tensor<double>(shape, std::move(data)).cast<float>();
  } else {
    rec.frames = Tensor<double>(shape, std::move(data));
  }
  if (a.height > 0) rec.meta.spatial = std::make_pair(a.height, a.width);
  if (a.label) rec.meta.label = *a.label;
  write_clip_file(a.out, rec);
  std::printf("wrote %s  shape %s  seed %llu\n", a.out.c_str(), shape_string(shape).c_str(),
              static_cast<unsigned long long>(a.seed));
  return kOk;
}

}  // namespace tcp::cli
