#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcp/grad_check.hpp"
#include "tcp/tensor.hpp"

namespace tcp {

// ---- gradient checks ----

enum class GradScope { Primitive, Attention, TemporalConv, Spectral, Head };

GradScope parse_grad_scope(const std::string& s);  // primitive|attention|tconv|spectral|head
std::string to_string(GradScope s);

struct GradCase {
  std::string name;
  GradCheckReport report;
  double tolerance = 1e-4;

  bool passed() const { return report.max_rel_error <= tolerance; }
};

// Central-difference checks (double precision, h = 1e-5) of every backward
// rule in a scope. Primitives are held to 1e-6, composite blocks to 1e-4.
std::vector<GradCase> run_grad_checks(GradScope scope, std::uint64_t seed);

// ---- efficient vs expanded temporal covariance pooling ----

struct EquivalenceGrid {
  std::vector<Index> frames{1, 2, 4, 8};
  std::vector<Index> positions{1, 4, 16};
  std::vector<Index> dims{2, 8, 16};
  std::vector<int> kappas{1, 3, 5};
  int trials = 20;  // random draws per grid point
  std::uint64_t seed = 0;
  DType dtype = DType::Double;
  bool inject_fault = false;  // doubles the centre tap on the efficient side
};

struct EquivalenceCase {
  Index frames = 0, positions = 0, dim = 0;
  int kappa = 0;
  int trial = 0;
  double discrepancy = 0.0;  // relative Frobenius
};

struct EquivalenceReport {
  std::size_t cases = 0;
  double max_discrepancy = 0.0;
  EquivalenceCase worst;
  double tolerance = 0.0;

  bool passed() const { return max_discrepancy <= tolerance; }
};

double equivalence_tolerance(DType dtype);  // 1e-10 double, 1e-5 single
EquivalenceReport run_equivalence(const EquivalenceGrid& grid);

// ---- Newton-Schulz against the eigen oracle ----

// Random SPD matrix Q diag(lambda) Q^T with eigenvalues log-spaced in
// [1/cond, 1].
Matrix<double> random_spd(Index d, double cond, std::uint64_t seed);

struct SqrtBenchRow {
  int iterations = 0;
  double residual = 0.0;        // ||Q_K^2 - A_n||_F / ||A_n||_F
  double oracle_error = 0.0;    // ||NS - oracle||_F / ||oracle||_F
};

std::vector<SqrtBenchRow> sqrt_bench(const Matrix<double>& a, const std::vector<int>& iterations);

// Residual column non-increasing (ignoring changes below 1e-13) and last
// entry <= limit.
bool residual_converges(const std::vector<SqrtBenchRow>& rows, double limit = 1e-6);

}  // namespace tcp
