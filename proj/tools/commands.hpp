#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tcp::cli {

// Process exit codes.
enum Exit : int { kOk = 0, kCheckFailed = 1, kFormatError = 2, kUsageError = 3 };

struct PoolArgs {
  std::string input;
  std::string out;
  std::string variant = "tcp";
  std::optional<long> dim;
  std::optional<int> kappa;
  std::optional<int> iterations;
  bool centered = false;
  bool no_attention = false;
  std::string params;
  std::string dtype = "single";
  std::uint64_t seed = 0;
};

struct EquivalenceArgs {
  int trials = 20;
  std::uint64_t seed = 0;
  std::vector<long> frames{1, 2, 4, 8};
  std::vector<long> positions{1, 4, 16};
  std::vector<long> dims{2, 8, 16};
  std::vector<int> kappas{1, 3, 5};
  std::string dtype = "double";
  bool inject_fault = false;
};

struct GradcheckArgs {
  std::string scope = "head";
  std::uint64_t seed = 0;
};

struct SqrtBenchArgs {
  long dim = 32;
  std::vector<int> iterations{1, 3, 10, 20};
  double cond = 100.0;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
};

struct InfoArgs {
  std::string params;
};

struct InitArgs {
  std::string out;
  std::string config;
};

struct SynthArgs {
  std::string out;
  long frames = 8;
  long positions = 196;
  long channels = 2048;
  long height = 0;
  long width = 0;
  std::optional<long> label;
  std::string dtype = "single";
  std::uint64_t seed = 0;
};

int run_pool(const PoolArgs& a);
int run_equivalence(const EquivalenceArgs& a);
int run_gradcheck(const GradcheckArgs& a);
int run_sqrt_bench(const SqrtBenchArgs& a);
int run_train(const TrainArgs& a);
int run_info(const InfoArgs& a);
int run_init(const InitArgs& a);
int run_synth(const SynthArgs& a);

}  // namespace tcp::cli
