#include "tcp/config.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include "tcp/errors.hpp"

namespace tcp {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<Int>(x);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

template <typename F>
void with(const KeyValues& kv, const char* key, F&& f) {
  auto it = kv.find(key);
  if (it != kv.end()) f(it->first, it->second);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "variant",      "channels",     "dim",           "frames",       "positions",
      "kappa",        "iterations",   "num_classes",   "centered",     "attention",
      "key_ratio",    "reduction",    "dropout",       "classifier_gain", "seed",
      "samples",      "noise_sigma",  "task",          "epochs",       "batch_size",
      "val_fraction", "early_stop",   "learning_rate", "momentum",     "weight_decay",
      "decay_factor", "decay_interval"};
  return keys;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Gap: return "gap";
    case Variant::PlainGcpMpn: return "gcp";
    case Variant::Tcp: return "tcp";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "gap") return Variant::Gap;
  if (s == "gcp" || s == "plain_gcp_mpn") return Variant::PlainGcpMpn;
  if (s == "tcp") return Variant::Tcp;
  throw ConfigError("unknown variant '" + s + "' (expected gap, gcp or tcp)");
}

Index HeadConfig::representation_dim() const {
  if (variant == Variant::Gap) return channels;
  return dim * (dim + 1) / 2;
}

void HeadConfig::validate() const {
  if (channels < 1) throw ConfigError("channels must be positive");
  if (frames < 1) throw ConfigError("frames must be positive");
  if (positions < 1) throw ConfigError("positions must be positive");
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (variant == Variant::Gap) return;
  if (dim < 1 || dim > channels) {
    throw ConfigError("projected width d=" + std::to_string(dim) + " must be in [1, C=" +
                      std::to_string(channels) + "]");
  }
  if (iterations < 1) throw ConfigError("Newton-Schulz iterations K must be >= 1");
  if (variant != Variant::Tcp) return;
  if (kappa < 1 || kappa % 2 == 0) {
    throw ConfigError("kernel size kappa must be odd and >= 1, got " + std::to_string(kappa));
  }
  if (attention) {
    if (key_ratio < 1 || key_width() < 1) throw ConfigError("TSA key width d/key_ratio must be >= 1");
    if (reduction < 1 || dim % reduction != 0) {
      throw ConfigError("TCA reduction " + std::to_string(reduction) + " must divide d=" +
                        std::to_string(dim));
    }
  }
}

void SyntheticSpec::validate() const {
  if (num_samples < 1 || frames < 1 || positions < 1 || channels < 1) {
    throw ConfigError("synthetic dataset sizes must be positive");
  }
  if (num_classes < 1 || num_samples % num_classes != 0) {
    throw ConfigError("num_samples must be divisible by num_classes");
  }
  if (num_classes != 2) throw ConfigError("synthetic tasks are binary: num_classes must be 2");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  if (task == SyntheticTask::OrderPair && channels < 2) {
    throw ConfigError("order_pair needs at least 2 channels");
  }
}

void TrainSettings::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in (0, 1)");
  if (!(sgd.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (sgd.decay_interval < 1) throw ConfigError("decay_interval must be positive");
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

void check_known_keys(const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (!known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
}

void apply(const KeyValues& kv, HeadConfig& c) {
  with(kv, "variant", [&](auto&, auto& v) { c.variant = parse_variant(v); });
  with(kv, "channels", [&](auto& k, auto& v) { c.channels = to_int<Index>(k, v); });
  with(kv, "dim", [&](auto& k, auto& v) { c.dim = to_int<Index>(k, v); });
  with(kv, "frames", [&](auto& k, auto& v) { c.frames = to_int<Index>(k, v); });
  with(kv, "positions", [&](auto& k, auto& v) { c.positions = to_int<Index>(k, v); });
  with(kv, "kappa", [&](auto& k, auto& v) { c.kappa = to_int<int>(k, v); });
  with(kv, "iterations", [&](auto& k, auto& v) { c.iterations = to_int<int>(k, v); });
  with(kv, "num_classes", [&](auto& k, auto& v) { c.num_classes = to_int<int>(k, v); });
  with(kv, "centered", [&](auto& k, auto& v) { c.centered = to_bool(k, v); });
  with(kv, "attention", [&](auto& k, auto& v) { c.attention = to_bool(k, v); });
  with(kv, "key_ratio", [&](auto& k, auto& v) { c.key_ratio = to_int<Index>(k, v); });
  with(kv, "reduction", [&](auto& k, auto& v) { c.reduction = to_int<Index>(k, v); });
  with(kv, "dropout", [&](auto& k, auto& v) { c.dropout = to_double(k, v); });
  with(kv, "classifier_gain", [&](auto& k, auto& v) { c.classifier_gain = to_double(k, v); });
  with(kv, "seed", [&](auto& k, auto& v) { c.seed = to_int<std::uint64_t>(k, v); });
}

void apply(const KeyValues& kv, SyntheticSpec& s) {
  with(kv, "samples", [&](auto& k, auto& v) { s.num_samples = to_int<Index>(k, v); });
  with(kv, "frames", [&](auto& k, auto& v) { s.frames = to_int<Index>(k, v); });
  with(kv, "positions", [&](auto& k, auto& v) { s.positions = to_int<Index>(k, v); });
  with(kv, "channels", [&](auto& k, auto& v) { s.channels = to_int<Index>(k, v); });
  with(kv, "num_classes", [&](auto& k, auto& v) { s.num_classes = to_int<int>(k, v); });
  with(kv, "noise_sigma", [&](auto& k, auto& v) { s.noise_sigma = to_double(k, v); });
  with(kv, "seed", [&](auto& k, auto& v) { s.seed = to_int<std::uint64_t>(k, v); });
  with(kv, "task", [&](auto&, auto& v) {
    if (v == "order_pair") {
      s.task = SyntheticTask::OrderPair;
    } else if (v == "motion_direction") {
      s.task = SyntheticTask::MotionDirection;
    } else {
      throw ConfigError("unknown task '" + v + "'");
    }
  });
}

void apply(const KeyValues& kv, TrainSettings& t) {
  with(kv, "epochs", [&](auto& k, auto& v) { t.epochs = to_int<int>(k, v); });
  with(kv, "batch_size", [&](auto& k, auto& v) { t.batch_size = to_int<Index>(k, v); });
  with(kv, "val_fraction", [&](auto& k, auto& v) { t.val_fraction = to_double(k, v); });
  with(kv, "early_stop", [&](auto& k, auto& v) { t.early_stop = to_bool(k, v); });
  with(kv, "learning_rate", [&](auto& k, auto& v) { t.sgd.learning_rate = to_double(k, v); });
  with(kv, "momentum", [&](auto& k, auto& v) { t.sgd.momentum = to_double(k, v); });
  with(kv, "weight_decay", [&](auto& k, auto& v) { t.sgd.weight_decay = to_double(k, v); });
  with(kv, "decay_factor", [&](auto& k, auto& v) { t.sgd.decay_factor = to_double(k, v); });
  with(kv, "decay_interval", [&](auto& k, auto& v) { t.sgd.decay_interval = to_int<int>(k, v); });
  with(kv, "seed", [&](auto& k, auto& v) { t.seed = to_int<std::uint64_t>(k, v); });
}

std::string to_key_values(const HeadConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "variant = " << to_string(c.variant) << "\n"
      << "channels = " << c.channels << "\n"
      << "dim = " << c.dim << "\n"
      << "frames = " << c.frames << "\n"
      << "positions = " << c.positions << "\n"
      << "kappa = " << c.kappa << "\n"
      << "iterations = " << c.iterations << "\n"
      << "num_classes = " << c.num_classes << "\n"
      << "centered = " << (c.centered ? "true" : "false") << "\n"
      << "attention = " << (c.attention ? "true" : "false") << "\n"
      << "key_ratio = " << c.key_ratio << "\n"
      << "reduction = " << c.reduction << "\n"
      << "dropout = " << c.dropout << "\n"
      << "classifier_gain = " << c.classifier_gain << "\n"
      << "seed = " << c.seed << "\n";
  return out.str();
}

}  // namespace tcp
