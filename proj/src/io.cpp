#include "tcp/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace tcp {

static_assert(std::endian::native == std::endian::little,
              "file I/O assumes a little-endian host");

namespace {

constexpr char kTensorMagic[4] = {'T', 'C', 'P', 'T'};
constexpr char kMetaMagic[4] = {'T', 'C', 'P', 'M'};
constexpr char kCheckpointMagic[4] = {'T', 'C', 'P', 'C'};

// Caps keep a corrupt header from triggering huge allocations.
constexpr std::uint32_t kMaxRank = 16;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& in, const char* what) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(U))) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
  return v;
}

void expect_magic(std::istream& in, const char (&magic)[4], const char* what) {
  char buf[4] = {};
  in.read(buf, 4);
  if (in.gcount() != 4 || std::memcmp(buf, magic, 4) != 0) {
    throw FormatError(std::string("bad magic: not a ") + what);
  }
}

template <typename T>
void write_payload(std::ostream& out, const Tensor<T>& t) {
  out.write(reinterpret_cast<const char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <typename T>
Tensor<T> read_payload(std::istream& in, Shape shape) {
  std::vector<T> data(shape_size(shape));
  const auto bytes = static_cast<std::streamsize>(data.size() * sizeof(T));
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (in.gcount() != bytes) throw FormatError("truncated tensor payload");
  return Tensor<T>(std::move(shape), std::move(data));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return in;
}

bool at_end(std::istream& in) {
  return in.peek() == std::char_traits<char>::eof();
}

}  // namespace

void write_tensor(std::ostream& out, const AnyTensor& any) {
  std::visit(
      [&](const auto& t) {
        out.write(kTensorMagic, 4);
        put<std::uint32_t>(out, kTensorFileVersion);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dtype()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
        write_payload(out, t);
      },
      any);
  if (!out) throw FormatError("write failed");
}

AnyTensor read_tensor(std::istream& in) {
  expect_magic(in, kTensorMagic, "tensor file");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kTensorFileVersion) {
    throw FormatError("unsupported tensor file version " + std::to_string(version));
  }
  const auto dtype = get<std::uint32_t>(in, "dtype");
  if (dtype != 1 && dtype != 2) throw FormatError("unknown dtype code " + std::to_string(dtype));
  const auto ndim = get<std::uint32_t>(in, "ndim");
  if (ndim == 0 || ndim > kMaxRank) throw FormatError("invalid rank " + std::to_string(ndim));
  Shape shape;
  std::uint64_t total = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const auto d = get<std::uint64_t>(in, "dims");
    if (d == 0) throw FormatError("zero-sized dimension");
    if (d > kMaxElements || total > kMaxElements / d) throw FormatError("tensor too large");
    total *= d;
    shape.push_back(static_cast<std::size_t>(d));
  }
  if (dtype == 1) return read_payload<float>(in, std::move(shape));
  return read_payload<double>(in, std::move(shape));
}

void write_tensor_file(const std::string& path, const AnyTensor& t) {
  auto out = open_out(path);
  write_tensor(out, t);
}

AnyTensor read_tensor_file(const std::string& path) {
  auto in = open_in(path);
  AnyTensor t = read_tensor(in);
  if (!at_end(in)) throw FormatError("trailing bytes after tensor payload in " + path);
  return t;
}

void write_clip_file(const std::string& path, const ClipRecord& clip) {
  const std::size_t rank = std::visit([](const auto& t) { return t.rank(); }, clip.frames);
  if (rank != 3) throw DimensionError("clip tensor must be rank 3 (L, N, C)");
  auto out = open_out(path);
  write_tensor(out, clip.frames);
  if (clip.meta.spatial || clip.meta.label) {
    out.write(kMetaMagic, 4);
    std::uint32_t flags = (clip.meta.spatial ? 1u : 0u) | (clip.meta.label ? 2u : 0u);
    put<std::uint32_t>(out, flags);
    put<std::uint64_t>(out, clip.meta.spatial ? clip.meta.spatial->first : 0);
    put<std::uint64_t>(out, clip.meta.spatial ? clip.meta.spatial->second : 0);
    put<std::int64_t>(out, clip.meta.label.value_or(0));
  }
  if (!out) throw FormatError("write failed for " + path);
}

ClipRecord read_clip_file(const std::string& path) {
  auto in = open_in(path);
  ClipRecord rec{read_tensor(in), {}};
  const Shape shape = std::visit([](const auto& t) { return t.shape(); }, rec.frames);
  if (shape.size() != 3) {
    throw FormatError("clip file must hold a rank-3 (L, N, C) tensor, got " + shape_string(shape));
  }
  if (!at_end(in)) {
    expect_magic(in, kMetaMagic, "clip metadata block");
    const auto flags = get<std::uint32_t>(in, "metadata flags");
    const auto h = get<std::uint64_t>(in, "H");
    const auto w = get<std::uint64_t>(in, "W");
    const auto label = get<std::int64_t>(in, "label");
    if (flags & ~3u) throw FormatError("unknown clip metadata flags");
    if (flags & 1u) {
      if (h * w != shape[1]) {
        throw FormatError("clip metadata H*W = " + std::to_string(h * w) + " does not match N = " +
                          std::to_string(shape[1]));
      }
      rec.meta.spatial = std::make_pair(h, w);
    }
    if (flags & 2u) rec.meta.label = label;
    if (!at_end(in)) throw FormatError("trailing bytes after clip metadata in " + path);
  }
  return rec;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  auto out = open_out(path);
  out.write(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string text = to_key_values(ckpt.config);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, t);
  }
  if (!out) throw FormatError("write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  auto in = open_in(path);
  expect_magic(in, kCheckpointMagic, "checkpoint");
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto text_len = get<std::uint64_t>(in, "config length");
  if (text_len > (1u << 20)) throw FormatError("checkpoint config block too large");
  std::string text(text_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(text_len));
  if (in.gcount() != static_cast<std::streamsize>(text_len)) throw FormatError("truncated config block");

  Checkpoint c;
  try {
    tcp::apply(parse_key_values(text), c.config);
    c.config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad checkpoint config: ") + e.what());
  }
  const auto count = get<std::uint32_t>(in, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, "name length");
    if (len > 4096) throw FormatError("tensor name too long");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw FormatError("truncated tensor name");
    c.tensors.emplace_back(std::move(name), as_dtype<double>(read_tensor(in)));
  }
  if (!at_end(in)) throw FormatError("trailing bytes in checkpoint " + path);
  return c;
}

}  // namespace tcp
