#include <numeric>

#include "tcp/head.hpp"

namespace tcp {

namespace {
std::int64_t affine_params(std::int64_t in, std::int64_t out) { return (in + 1) * out; }
}  // namespace

std::vector<LedgerEntry> parameter_ledger(const HeadConfig& cfg) {
  cfg.validate();
  const std::int64_t c = cfg.channels;
  const std::int64_t d = cfg.dim;
  const std::int64_t m = cfg.representation_dim();
  const std::int64_t k = cfg.num_classes;

  std::vector<LedgerEntry> ledger;
  if (cfg.variant != Variant::Gap) ledger.push_back({"proj", affine_params(c, d)});
  if (cfg.variant == Variant::Tcp) {
    if (cfg.attention) {
      const std::int64_t ck = cfg.key_width();
      const std::int64_t hidden = d / cfg.reduction;
      ledger.push_back({"tsa.phi0", affine_params(d, d)});
      ledger.push_back({"tsa.phi_m1", affine_params(d, ck)});
      ledger.push_back({"tsa.phi_m2", affine_params(d, ck)});
      ledger.push_back({"tsa.norm", 2 * d});
      ledger.push_back({"tca.fc1", affine_params(d, hidden)});
      ledger.push_back({"tca.fc2", affine_params(hidden, d)});
    }
    ledger.push_back({"kernel", cfg.kappa * d * d});
  }
  ledger.push_back({"classifier", affine_params(m, k)});
  return ledger;
}

std::vector<LedgerEntry> flop_ledger(const HeadConfig& cfg) {
  cfg.validate();
  const std::int64_t l = cfg.frames;
  const std::int64_t n = cfg.positions;
  const std::int64_t c = cfg.channels;
  const std::int64_t d = cfg.dim;
  const std::int64_t m = cfg.representation_dim();
  const std::int64_t k = cfg.num_classes;

  std::vector<LedgerEntry> ledger;
  if (cfg.variant == Variant::Gap) {
    ledger.push_back({"gap", l * n * c});
    ledger.push_back({"classifier", 2 * m * k + k});
    return ledger;
  }

  ledger.push_back({"proj", 2 * l * n * c * d + l * n * d});

  if (cfg.variant == Variant::PlainGcpMpn) {
    ledger.push_back({"covariance", 2 * l * n * d * d + l * d * d + d * d});
  } else {
    if (cfg.attention) {
      const std::int64_t ck = cfg.key_width();
      const std::int64_t h = d / cfg.reduction;
      // phi maps, N x N scores, row softmax (exp, sum, divide), value
      // product, batch normalization (4 per element).
      const std::int64_t tsa = (2 * n * d * d + n * d) + 2 * (2 * n * d * ck + n * ck) +
                               2 * n * n * ck + 3 * n * n + 2 * n * n * d + 4 * n * d;
      // Two temporal differences and spatial means, two gate branches,
      // average of the branches.
      const std::int64_t gate = (2 * d * h + h) + h + (2 * h * d + d) + d;
      const std::int64_t tca = 4 * n * d + 2 * gate + 3 * d;
      ledger.push_back({"tsa", l * tsa});
      ledger.push_back({"tca", l * tca});
      ledger.push_back({"calibrate", l * 2 * n * d});
    }
    ledger.push_back({"temporal_conv", l * (cfg.kappa * 2 * n * d * d + (cfg.kappa - 1) * n * d)});
    ledger.push_back({"covariance", 2 * l * n * d * d + d * d});
  }
  // Trace scaling, K iterations of three products plus 3I - RQ and two
  // halvings, then symmetrization and sqrt(trace) compensation.
  const std::int64_t per_iter = 3 * 2 * d * d * d + 3 * d * d;
  ledger.push_back({"mpn", d + d * d + cfg.iterations * per_iter + 3 * d * d});
  ledger.push_back({"classifier", 2 * m * k + k});
  return ledger;
}

std::int64_t ledger_total(const std::vector<LedgerEntry>& ledger) {
  return std::accumulate(ledger.begin(), ledger.end(), std::int64_t{0},
                         [](std::int64_t s, const LedgerEntry& e) { return s + e.count; });
}

std::int64_t count_flops(const HeadConfig& cfg) { return ledger_total(flop_ledger(cfg)); }

}  // namespace tcp
