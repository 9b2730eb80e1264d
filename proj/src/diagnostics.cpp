#include "tcp/diagnostics.hpp"

#include <Eigen/QR>

#include <functional>

#include "tcp/head.hpp"

namespace tcp {

GradScope parse_grad_scope(const std::string& s) {
  if (s == "primitive") return GradScope::Primitive;
  if (s == "attention") return GradScope::Attention;
  if (s == "tconv") return GradScope::TemporalConv;
  if (s == "spectral") return GradScope::Spectral;
  if (s == "head") return GradScope::Head;
  throw ConfigError("unknown gradcheck scope '" + s +
                    "' (expected primitive, attention, tconv, spectral or head)");
}

std::string to_string(GradScope s) {
  switch (s) {
    case GradScope::Primitive: return "primitive";
    case GradScope::Attention: return "attention";
    case GradScope::TemporalConv: return "tconv";
    case GradScope::Spectral: return "spectral";
    case GradScope::Head: return "head";
  }
  return "?";
}

namespace {

using D = double;
using Loss = std::function<Var<D>(Tape<D>&)>;

Parameter<D> input(const std::string& name, Matrix<D> value) {
  return Parameter<D>{name, std::move(value), true, true};
}

GradCase check(const std::string& name, const Loss& loss, std::vector<Parameter<D>*> params,
               double tol) {
  return {name, grad_check(loss, params), tol};
}

std::vector<GradCase> primitive_checks(Rng& rng) {
  constexpr double tol = 1e-6;
  std::vector<GradCase> out;
  Parameter<D> a = input("a", rng.normal_matrix<D>(3, 4));
  Parameter<D> b = input("b", rng.normal_matrix<D>(4, 2));
  Parameter<D> c = input("c", rng.normal_matrix<D>(3, 4));
  Parameter<D> row = input("row", rng.normal_matrix<D>(1, 4));
  Parameter<D> scalar = input("s", rng.normal_matrix<D>(1, 1));
  Parameter<D> sq = input("sq", rng.normal_matrix<D>(4, 4));
  // Kept away from the relu kink and positive for sqrt/reciprocal.
  Matrix<D> offset = rng.uniform_matrix<D>(3, 4, 1.0);
  offset = offset.array() + offset.array().sign() * 0.1;
  Parameter<D> kinked = input("x", offset);
  Parameter<D> pos = input("p", rng.uniform_matrix<D>(3, 4, 1.0).array() + 1.5);

  // Outputs are contracted with fixed random weights so every entry reaches
  // the scalar loss with a distinct coefficient.
  auto fixed = [&](Index r, Index c2) { return rng.normal_matrix<D>(r, c2); };
  auto contract = [](const Var<D>& v, const Matrix<D>& w) {
    return sum(mul(v, v.tape().constant(w)));
  };

  {
    Matrix<D> w = fixed(3, 2);
    out.push_back(check("matmul", [&](Tape<D>& t) { return contract(matmul(t.param(a), t.param(b)), w); },
                        {&a, &b}, tol));
  }
  {
    Matrix<D> w = fixed(4, 4);
    out.push_back(check("gram", [&](Tape<D>& t) { return contract(gram(t.param(a)), w); }, {&a}, tol));
  }
  {
    Matrix<D> w = fixed(4, 3);
    out.push_back(check("transpose", [&](Tape<D>& t) { return contract(transpose(t.param(a)), w); },
                        {&a}, tol));
  }
  {
    Matrix<D> w = fixed(3, 4);
    out.push_back(check("add", [&](Tape<D>& t) { return contract(add(t.param(a), t.param(c)), w); },
                        {&a, &c}, tol));
    out.push_back(check("add_broadcast_row",
                        [&](Tape<D>& t) { return contract(add(t.param(a), t.param(row)), w); },
                        {&a, &row}, tol));
    out.push_back(check("add_broadcast_scalar",
                        [&](Tape<D>& t) { return contract(add(t.param(scalar), t.param(a)), w); },
                        {&a, &scalar}, tol));
    out.push_back(check("sub_broadcast_row",
                        [&](Tape<D>& t) { return contract(sub(t.param(a), t.param(row)), w); },
                        {&a, &row}, tol));
    out.push_back(check("mul", [&](Tape<D>& t) { return contract(mul(t.param(a), t.param(c)), w); },
                        {&a, &c}, tol));
    out.push_back(check("mul_broadcast_row",
                        [&](Tape<D>& t) { return contract(mul(t.param(row), t.param(a)), w); },
                        {&a, &row}, tol));
    out.push_back(check("mul_broadcast_scalar",
                        [&](Tape<D>& t) { return contract(mul(t.param(a), t.param(scalar)), w); },
                        {&a, &scalar}, tol));
    out.push_back(check("scale", [&](Tape<D>& t) { return contract(scale(t.param(a), 2.5), w); },
                        {&a}, tol));
    out.push_back(check("sigmoid", [&](Tape<D>& t) { return contract(sigmoid(t.param(a)), w); },
                        {&a}, tol));
    out.push_back(check("relu", [&](Tape<D>& t) { return contract(relu(t.param(kinked)), w); },
                        {&kinked}, tol));
    out.push_back(check("sqrt", [&](Tape<D>& t) { return contract(sqrt(t.param(pos)), w); },
                        {&pos}, tol));
    out.push_back(check("reciprocal",
                        [&](Tape<D>& t) { return contract(reciprocal(t.param(pos)), w); }, {&pos}, tol));
    out.push_back(check("softmax_rows",
                        [&](Tape<D>& t) { return contract(softmax_rows(t.param(a)), w); }, {&a}, tol));
  }
  {
    Matrix<D> w0 = fixed(1, 4), w1 = fixed(3, 1);
    out.push_back(check("mean_over_rows",
                        [&](Tape<D>& t) { return contract(mean_over(t.param(a), 0), w0); }, {&a}, tol));
    out.push_back(check("mean_over_cols",
                        [&](Tape<D>& t) { return contract(mean_over(t.param(a), 1), w1); }, {&a}, tol));
  }
  out.push_back(check("sum", [&](Tape<D>& t) { return scale(sum(mul(t.param(a), t.param(a))), 0.5); },
                      {&a}, tol));
  {
    Matrix<D> w = fixed(1, 1);
    out.push_back(check("trace", [&](Tape<D>& t) { return contract(trace(mul(t.param(sq), t.param(sq))), w); },
                        {&sq}, tol));
  }
  {
    Matrix<D> w = fixed(6, 4);
    out.push_back(check("concat_rows",
                        [&](Tape<D>& t) {
                          std::vector<Var<D>> parts{t.param(a), t.param(c)};
                          return contract(concat_rows<D>(parts), w);
                        },
                        {&a, &c}, tol));
  }
  {
    Matrix<D> w = fixed(2, 4);
    out.push_back(check("slice_rows",
                        [&](Tape<D>& t) { return contract(slice_rows(t.param(a), 1, 2), w); }, {&a}, tol));
  }
  {
    const std::vector<int> labels{0, 3, 1};
    out.push_back(check("cross_entropy",
                        [&](Tape<D>& t) { return cross_entropy<D>(t.param(a), labels); }, {&a}, tol));
  }
  {
    Parameter<D> w = input("w", rng.normal_matrix<D>(4, 2));
    Parameter<D> bias = input("bias", rng.normal_matrix<D>(1, 2));
    Matrix<D> probe_w = fixed(3, 2);
    out.push_back(check("affine",
                        [&](Tape<D>& t) {
                          return contract(affine(t.param(a), t.param(w), t.param(bias)), probe_w);
                        },
                        {&a, &w, &bias}, tol));
  }
  {
    NormState<D> norm = make_norm_state<D>("norm", 4);
    norm.scale.value = rng.normal_matrix<D>(1, 4);
    norm.shift.value = rng.normal_matrix<D>(1, 4);
    Parameter<D> x = input("x", rng.normal_matrix<D>(6, 4));
    Matrix<D> w = fixed(6, 4);
    out.push_back(check("batch_norm",
                        [&](Tape<D>& t) { return contract(batch_norm(t.param(x), norm, true), w); },
                        {&x, &norm.scale, &norm.shift}, tol));
  }
  {
    Matrix<D> w = fixed(4, 4);
    out.push_back(check("frame_cov", [&](Tape<D>& t) { return contract(frame_cov(t.param(a)), w); },
                        {&a}, tol));
    out.push_back(check("frame_cov_centered",
                        [&](Tape<D>& t) { return contract(frame_cov(t.param(a), true), w); }, {&a}, tol));
    Matrix<D> wg = fixed(1, 4);
    out.push_back(check("gap",
                        [&](Tape<D>& t) {
                          std::vector<Var<D>> frames{t.param(a), t.param(c)};
                          return contract(gap<D>(frames), wg);
                        },
                        {&a, &c}, tol));
    out.push_back(check("plain_gcp",
                        [&](Tape<D>& t) {
                          std::vector<Var<D>> frames{t.param(a), t.param(c)};
                          return contract(plain_gcp<D>(frames), w);
                        },
                        {&a, &c}, tol));
  }
  {
    Matrix<D> w = fixed(1, 10);
    out.push_back(check("triangulate",
                        [&](Tape<D>& t) { return contract(triangulate(gram(t.param(a))), w); }, {&a},
                        tol));
  }
  return out;
}

std::vector<GradCase> attention_checks(Rng& rng) {
  constexpr double tol = 1e-4;
  constexpr Index n = 5, c = 8;
  std::vector<GradCase> out;
  TsaParams<D> tsa_p = make_tsa_params<D>("tsa", c, 2, rng);
  tsa_p.norm.scale.value = rng.uniform_matrix<D>(1, c, 1.0).array() + 1.5;
  tsa_p.norm.shift.value = rng.normal_matrix<D>(1, c);
  TcaParams<D> tca_p = make_tca_params<D>("tca", c, 4, rng);
  tca_p.fc2.bias.value = rng.normal_matrix<D>(1, c, 0.5);
  Parameter<D> x0 = input("x_lm2", rng.normal_matrix<D>(n, c));
  Parameter<D> x1 = input("x_lm1", rng.normal_matrix<D>(n, c));
  Parameter<D> x2 = input("x_l", rng.normal_matrix<D>(n, c));
  const Matrix<D> w = rng.normal_matrix<D>(n, c);
  const Matrix<D> wg = rng.normal_matrix<D>(1, c);
  auto contract = [](const Var<D>& v, const Matrix<D>& m) { return sum(mul(v, v.tape().constant(m))); };

  auto tsa_params = [&]() {
    return std::vector<Parameter<D>*>{&tsa_p.phi0.weight,   &tsa_p.phi0.bias,   &tsa_p.phi_m1.weight,
                                      &tsa_p.phi_m1.bias,   &tsa_p.phi_m2.weight, &tsa_p.phi_m2.bias,
                                      &tsa_p.norm.scale,    &tsa_p.norm.shift};
  };
  auto tca_params = [&]() {
    return std::vector<Parameter<D>*>{&tca_p.fc1.weight, &tca_p.fc1.bias, &tca_p.fc2.weight,
                                      &tca_p.fc2.bias};
  };

  {
    auto ps = tsa_params();
    ps.insert(ps.end(), {&x0, &x1, &x2});
    out.push_back(check("tsa",
                        [&](Tape<D>& t) {
                          return contract(tsa(t.param(x0), t.param(x1), t.param(x2), tsa_p, true), w);
                        },
                        ps, tol));
  }
  {
    auto ps = tca_params();
    ps.insert(ps.end(), {&x0, &x1, &x2});
    out.push_back(check("tca",
                        [&](Tape<D>& t) {
                          return contract(tca(t.param(x0), t.param(x1), t.param(x2), tca_p), wg);
                        },
                        ps, tol));
  }
  {
    Parameter<D> x3 = input("x3", rng.normal_matrix<D>(n, c));
    auto ps = tsa_params();
    auto tp = tca_params();
    ps.insert(ps.end(), tp.begin(), tp.end());
    ps.insert(ps.end(), {&x0, &x1, &x2, &x3});
    const Matrix<D> wc = rng.normal_matrix<D>(n, c);
    out.push_back(check("calibrate",
                        [&](Tape<D>& t) {
                          std::vector<std::vector<Var<D>>> clips{
                              {t.param(x0), t.param(x1), t.param(x2), t.param(x3)}};
                          auto cal = calibrate<D>(clips, tsa_p, tca_p, true);
                          Var<D> loss = contract(cal[0][0], wc);
                          for (std::size_t l = 1; l < cal[0].size(); ++l) {
                            loss = add(loss, contract(cal[0][l], wc));
                          }
                          return loss;
                        },
                        ps, tol));
  }
  return out;
}

std::vector<GradCase> tconv_checks(Rng& rng) {
  constexpr double tol = 1e-4;
  constexpr Index n = 4, d = 5;
  std::vector<GradCase> out;
  TemporalKernel<D> k = random_kernel<D>(d, 3, rng, 0.5);
  std::vector<Parameter<D>> frames;
  for (int l = 0; l < 4; ++l) frames.push_back(input("x" + std::to_string(l), rng.normal_matrix<D>(n, d)));
  std::vector<Parameter<D>*> ps;
  for (auto& t : k.taps) ps.push_back(&t);
  for (auto& f : frames) ps.push_back(&f);
  const Matrix<D> w = rng.normal_matrix<D>(d, d);
  const Matrix<D> wy = rng.normal_matrix<D>(n, d);
  auto bind = [&](Tape<D>& t) {
    std::vector<Var<D>> xs;
    for (auto& f : frames) xs.push_back(t.param(f));
    return xs;
  };
  out.push_back(check("temporal_conv",
                      [&](Tape<D>& t) {
                        auto ys = temporal_conv<D>(bind(t), k);
                        Var<D> loss = sum(mul(ys[0], t.constant(wy)));
                        for (std::size_t l = 1; l < ys.size(); ++l) {
                          loss = add(loss, sum(mul(ys[l], t.constant(wy * static_cast<D>(l + 1)))));
                        }
                        return loss;
                      },
                      ps, tol));
  out.push_back(check("tcp_pool_efficient",
                      [&](Tape<D>& t) {
                        return sum(mul(tcp_pool_efficient<D>(bind(t), k), t.constant(w)));
                      },
                      ps, tol));
  return out;
}

std::vector<GradCase> spectral_checks(Rng& rng) {
  constexpr double tol = 1e-4;
  std::vector<GradCase> out;
  for (int iters : {1, 3, 5}) {
    Matrix<D> m = rng.normal_matrix<D>(8, 6);
    Parameter<D> a = input("A", m.transpose() * m / 8.0);
    out.push_back(check("newton_schulz_K" + std::to_string(iters) + "_sum",
                        [&](Tape<D>& t) { return sum(newton_schulz(t.param(a), iters).sqrt); }, {&a},
                        tol));
  }
  Parameter<D> x = input("X", rng.normal_matrix<D>(7, 5));
  const Matrix<D> w = rng.normal_matrix<D>(5, 5);
  out.push_back(check("newton_schulz_K3_of_gram",
                      [&](Tape<D>& t) {
                        Var<D> cov = scale(gram(t.param(x)), 1.0 / 7.0);
                        return sum(mul(newton_schulz(cov, 3).sqrt, t.constant(w)));
                      },
                      {&x}, tol));
  return out;
}

std::vector<GradCase> head_checks(Rng& rng, std::uint64_t seed) {
  constexpr double tol = 1e-4;
  std::vector<GradCase> out;
  HeadConfig cfg;
  cfg.channels = 6;
  cfg.dim = 4;
  cfg.frames = 2;
  cfg.positions = 5;
  cfg.kappa = 3;
  cfg.num_classes = 2;
  cfg.key_ratio = 2;
  cfg.reduction = 2;
  cfg.dropout = 0.5;
  cfg.seed = seed;

  std::vector<FeatureClip<D>> clips(2);
  for (auto& clip : clips) {
    for (Index l = 0; l < cfg.frames; ++l) clip.frames.push_back(rng.normal_matrix<D>(cfg.positions, cfg.channels));
  }
  const std::vector<int> labels{0, 1};

  for (Variant v : {Variant::Tcp, Variant::PlainGcpMpn, Variant::Gap}) {
    cfg.variant = v;
    TcpParams<D> p = make_params<D>(cfg);
    if (p.has_attention()) {
      p.tsa.norm.shift.value = rng.normal_matrix<D>(1, cfg.dim, 0.5);
      p.tca.fc2.bias.value = rng.normal_matrix<D>(1, cfg.dim, 0.5);
    }
    for (auto& tap : p.kernel.taps) tap.value += rng.normal_matrix<D>(cfg.dim, cfg.dim, 0.3);
    auto params = parameter_list(p);
    const ForwardOptions opt{true, seed + 1};
    out.push_back(check("head_" + to_string(v) + "_cross_entropy",
                        [&](Tape<D>& t) {
                          Var<D> logits = forward_logits<D>(t, clips, p, cfg, opt);
                          return cross_entropy<D>(logits, labels);
                        },
                        params, tol));
  }

  cfg.variant = Variant::Tcp;
  TcpParams<D> p = make_params<D>(cfg);
  auto params = parameter_list(p);
  out.push_back(check("head_tcp_output_norm2",
                      [&](Tape<D>& t) {
                        Var<D> logits =
                            forward_logits<D>(t, std::span<const FeatureClip<D>>(clips.data(), 1), p, cfg,
                                              ForwardOptions{true, seed + 2});
                        return sum(mul(logits, logits));
                      },
                      params, tol));
  return out;
}

}  // namespace

std::vector<GradCase> run_grad_checks(GradScope scope, std::uint64_t seed) {
  Rng rng(seed);
  switch (scope) {
    case GradScope::Primitive: return primitive_checks(rng);
    case GradScope::Attention: return attention_checks(rng);
    case GradScope::TemporalConv: return tconv_checks(rng);
    case GradScope::Spectral: return spectral_checks(rng);
    case GradScope::Head: return head_checks(rng, seed);
  }
  return {};
}

double equivalence_tolerance(DType dtype) { return dtype == DType::Double ? 1e-10 : 1e-5; }

namespace {

template <typename T>
void equivalence_sweep(const EquivalenceGrid& grid, EquivalenceReport& report) {
  Rng rng(grid.seed);
  for (Index frames : grid.frames)
    for (Index positions : grid.positions)
      for (Index dim : grid.dims)
        for (int kappa : grid.kappas)
          for (int trial = 0; trial < grid.trials; ++trial) {
            FeatureClip<T> clip;
            for (Index l = 0; l < frames; ++l) clip.frames.push_back(rng.normal_matrix<T>(positions, dim));
            TemporalKernel<T> k = random_kernel<T>(dim, kappa, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
            const Matrix<T> expanded = tcp_pool_expanded(clip, k).mat;
            if (grid.inject_fault) k.tap(0).value *= T(2);
            const Matrix<T> efficient = tcp_pool_efficient(clip, k).mat;
            const double denom = std::max(expanded.template cast<double>().norm(), 1e-300);
            const double disc = (efficient - expanded).template cast<double>().norm() / denom;
            ++report.cases;
            if (report.cases == 1 || disc > report.max_discrepancy) {
              report.max_discrepancy = disc;
              report.worst = {frames, positions, dim, kappa, trial, disc};
            }
          }
}

}  // namespace

EquivalenceReport run_equivalence(const EquivalenceGrid& grid) {
  for (int k : grid.kappas) check_kappa(k);
  EquivalenceReport report;
  report.tolerance = equivalence_tolerance(grid.dtype);
  if (grid.dtype == DType::Double) {
    equivalence_sweep<double>(grid, report);
  } else {
    equivalence_sweep<float>(grid, report);
  }
  return report;
}

Matrix<double> random_spd(Index d, double cond, std::uint64_t seed) {
  if (!(cond >= 1.0)) throw ConfigError("condition number must be >= 1");
  Rng rng(seed);
  Eigen::HouseholderQR<Matrix<double>> qr(rng.normal_matrix<double>(d, d));
  Matrix<double> q = qr.householderQ();
  Eigen::VectorXd lambda(d);
  for (Index i = 0; i < d; ++i) {
    const double frac = d > 1 ? static_cast<double>(i) / static_cast<double>(d - 1) : 0.0;
    lambda(i) = std::pow(cond, -frac);
  }
  Matrix<double> a = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

std::vector<SqrtBenchRow> sqrt_bench(const Matrix<double>& a, const std::vector<int>& iterations) {
  const Matrix<double> oracle = eig_sqrt_oracle<double>(a);
  std::vector<SqrtBenchRow> rows;
  for (int k : iterations) {
    SqrtResult<double> r = newton_schulz_sqrt<double>(a, k);
    rows.push_back({k, r.residual, (r.sqrt_mat - oracle).norm() / oracle.norm()});
  }
  return rows;
}

bool residual_converges(const std::vector<SqrtBenchRow>& rows, double limit) {
  if (rows.empty()) return true;
  // Below this both values are rounding noise and may trade places.
  constexpr double kFloor = 1e-13;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].residual > rows[i - 1].residual && rows[i].residual > kFloor) return false;
  }
  return rows.back().residual <= limit;
}

}  // namespace tcp
