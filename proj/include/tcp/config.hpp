#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tcp/tensor.hpp"

namespace tcp {

enum class Variant { Gap, PlainGcpMpn, Tcp };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);  // gap | gcp | plain_gcp_mpn | tcp

// Best kernel sizes reported for 8- and 16-frame inputs (5 and 9).
inline int default_kappa(Index frames) { return frames >= 16 ? 9 : 5; }

struct HeadConfig {
  Variant variant = Variant::Tcp;
  Index channels = 2048;   // C, backbone width
  Index dim = 128;         // d, projected width
  Index frames = 8;        // L
  Index positions = 196;   // N (14x14 with the last downsampling removed)
  int kappa = 5;
  int iterations = 3;      // Newton-Schulz K
  int num_classes = 400;
  bool centered = false;
  bool attention = true;
  Index key_ratio = 4;     // TSA key width = dim / key_ratio
  Index reduction = 16;    // TCA bottleneck = dim / reduction
  double dropout = 0.5;
  double classifier_gain = 1.0;  // scales the classifier init bound
  std::uint64_t seed = 0;

  Index key_width() const { return dim / key_ratio; }
  // Length of the vector fed to the classifier.
  Index representation_dim() const;

  void validate() const;
};

enum class SyntheticTask { OrderPair, MotionDirection };

struct SyntheticSpec {
  Index num_samples = 512;
  Index frames = 8;
  Index positions = 16;
  Index channels = 32;
  int num_classes = 2;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  SyntheticTask task = SyntheticTask::OrderPair;

  void validate() const;
};

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double decay_factor = 0.1;
  int decay_interval = 120;  // epochs between learning-rate decays
};

struct TrainSettings {
  int epochs = 200;
  Index batch_size = 32;
  double val_fraction = 0.25;
  bool early_stop = true;
  SgdConfig sgd;
  std::uint64_t seed = 0;  // shuffling and dropout

  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

// Flat "key = value" text; '#' starts a comment.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::string& path);

// Each apply() consumes the keys it knows and leaves the rest.
void apply(const KeyValues& kv, HeadConfig& cfg);
void apply(const KeyValues& kv, SyntheticSpec& spec);
void apply(const KeyValues& kv, TrainSettings& settings);

// Throws ConfigError for keys none of the structs understand.
void check_known_keys(const KeyValues& kv);

std::string to_key_values(const HeadConfig& cfg);

}  // namespace tcp
