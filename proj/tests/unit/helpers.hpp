#pragma once

#include <filesystem>
#include <string>

#include "tcp/head.hpp"

namespace tcp::testing {

template <typename T>
FeatureClip<T> random_clip(Rng& rng, Index frames, Index positions, Index channels) {
  FeatureClip<T> clip;
  for (Index l = 0; l < frames; ++l) clip.frames.push_back(rng.normal_matrix<T>(positions, channels));
  return clip;
}

template <typename A, typename B>
double rel_frobenius(const A& a, const B& b) {
  const double denom = b.template cast<double>().norm();
  return (a.template cast<double>() - b.template cast<double>()).norm() / (denom > 0 ? denom : 1.0);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tcp_test_" + name);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace tcp::testing
