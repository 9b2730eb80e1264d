#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tcp/config.hpp"
#include "tcp/head.hpp"
#include "tcp/tensor.hpp"

namespace tcp {

// Tensor file layout (all little-endian):
//   "TCPT" | u32 version | u32 dtype (1 single, 2 double) | u32 ndim |
//   u64 dims[ndim] | row-major payload
// A clip file is a rank-3 (L, N, C) tensor file optionally followed by
//   "TCPM" | u32 flags | u64 H | u64 W | i64 label
// where flags bit 0 marks (H, W) present and bit 1 marks a label.
inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

void write_tensor(std::ostream& out, const AnyTensor& t);
AnyTensor read_tensor(std::istream& in);

void write_tensor_file(const std::string& path, const AnyTensor& t);
AnyTensor read_tensor_file(const std::string& path);

template <typename T>
Tensor<T> as_dtype(const AnyTensor& t) {
  return std::visit([](const auto& x) { return x.template cast<T>(); }, t);
}

struct ClipMeta {
  std::optional<std::pair<std::uint64_t, std::uint64_t>> spatial;
  std::optional<std::int64_t> label;
};

struct ClipRecord {
  AnyTensor frames;  // (L, N, C)
  ClipMeta meta;
};

void write_clip_file(const std::string& path, const ClipRecord& clip);
ClipRecord read_clip_file(const std::string& path);

template <typename T>
FeatureClip<T> to_feature_clip(const ClipRecord& rec) {
  FeatureClip<T> clip = FeatureClip<T>::from_tensor(as_dtype<T>(rec.frames));
  if (rec.meta.spatial) {
    clip.spatial = std::make_pair(static_cast<Index>(rec.meta.spatial->first),
                                  static_cast<Index>(rec.meta.spatial->second));
  }
  clip.validate();
  return clip;
}

// Checkpoint layout:
//   "TCPC" | u32 version | u64 config length | config text (key = value) |
//   u32 count | count x (u32 name length | name | tensor file block)
// Tensors are stored in double precision. Normalization running statistics
// are stored under "<norm name>.running_mean" / ".running_var".
struct Checkpoint {
  HeadConfig config;
  std::vector<std::pair<std::string, Tensor<double>>> tensors;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

template <typename T>
Checkpoint make_checkpoint(const HeadConfig& cfg, TcpParams<T>& p) {
  Checkpoint c;
  c.config = cfg;
  for_each_parameter(p, [&](Parameter<T>& q) {
    c.tensors.emplace_back(q.name, Tensor<double>::from_matrix(q.value.template cast<double>()));
  });
  if (p.has_attention()) {
    const std::string base = p.tsa.norm.scale.name.substr(0, p.tsa.norm.scale.name.rfind('.'));
    c.tensors.emplace_back(base + ".running_mean",
                           Tensor<double>::from_matrix(p.tsa.norm.running_mean.template cast<double>()));
    c.tensors.emplace_back(base + ".running_var",
                           Tensor<double>::from_matrix(p.tsa.norm.running_var.template cast<double>()));
  }
  return c;
}

// Builds parameters for the checkpoint's config and overwrites them with the
// stored tensors. Every parameter must be present with a matching shape.
template <typename T>
TcpParams<T> params_from_checkpoint(const Checkpoint& c) {
  TcpParams<T> p = make_params<T>(c.config);
  auto find = [&](const std::string& name) -> const Tensor<double>& {
    for (const auto& [n, t] : c.tensors) {
      if (n == name) return t;
    }
    throw FormatError("checkpoint is missing tensor '" + name + "'");
  };
  auto load = [&](const std::string& name, auto& target) {
    Matrix<double> m = find(name).matrix();
    if (m.rows() != target.rows() || m.cols() != target.cols()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " +
                        shape_string(m.rows(), m.cols()) + ", expected " +
                        shape_string(target.rows(), target.cols()));
    }
    target = m.cast<T>();
  };
  for_each_parameter(p, [&](Parameter<T>& q) { load(q.name, q.value); });
  if (p.has_attention()) {
    const std::string base = p.tsa.norm.scale.name.substr(0, p.tsa.norm.scale.name.rfind('.'));
    load(base + ".running_mean", p.tsa.norm.running_mean);
    load(base + ".running_var", p.tsa.norm.running_var);
  }
  return p;
}

}  // namespace tcp
