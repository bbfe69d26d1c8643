#pragma once

// Binary checkpoint, all fields little-endian:
//
//   "NCSN"                      4 bytes magic
//   version                     u32 (currently 1)
//   D, W, H, L, iteration       u32 each
//   sigma_1 .. sigma_L          f64 each
//   per parameter tensor, in NcsnMlp order:
//     rank                      u32
//     dims[rank]                u32 each
//     values                    f64 each, row-major
//   seed                        u64
//   objective                   u32 (0 esm, 1 ssm, 2 dsm, 3 ncsn)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ncsn/csv.hpp"
#include "ncsn/error.hpp"
#include "ncsn/network.hpp"
#include "ncsn/objectives.hpp"

namespace ncsn {

class CheckpointError : public IoError {
public:
  using IoError::IoError;
  const char* kind() const noexcept override { return "checkpoint"; }
};
class BadMagicError : public CheckpointError {
public:
  using CheckpointError::CheckpointError;
  const char* kind() const noexcept override { return "checkpoint_magic"; }
};
class VersionError : public CheckpointError {
public:
  using CheckpointError::CheckpointError;
  const char* kind() const noexcept override { return "checkpoint_version"; }
};
class TruncatedError : public CheckpointError {
public:
  using CheckpointError::CheckpointError;
  const char* kind() const noexcept override { return "checkpoint_truncated"; }
};
class CorruptError : public CheckpointError {
public:
  using CheckpointError::CheckpointError;
  const char* kind() const noexcept override { return "checkpoint_corrupt"; }
};

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 4> kCheckpointMagic{'N', 'C', 'S', 'N'};

struct TrainingMeta {
  std::uint32_t iteration = 0;
  std::uint64_t seed = 0;
  Objective objective = Objective::Ncsn;
};

struct Checkpoint {
  NetworkShape shape;
  NoiseSchedule schedule{{1.0}};
  std::vector<Tensor> params;
  TrainingMeta meta;

  NcsnMlp network() const {
    std::vector<ad::Var> leaves;
    for (const auto& p : params) leaves.push_back(ad::variable(p));
    return NcsnMlp(shape, schedule, std::move(leaves));
  }
};

namespace detail {

class ByteWriter {
public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.append(p, n); }
  const std::string& bytes() const { return bytes_; }

private:
  std::string bytes_;
};

class ByteReader {
public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw TruncatedError(std::string("checkpoint: truncated while reading ") + what + " at byte " + std::to_string(pos_));
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw CheckpointError(std::string("checkpoint: ") + what + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline std::string encode_checkpoint(const NcsnMlp& net, const TrainingMeta& meta) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(detail::checked_u32(net.shape().dim, "D"));
  w.u32(detail::checked_u32(net.shape().hidden, "W"));
  w.u32(detail::checked_u32(net.shape().layers, "H"));
  w.u32(detail::checked_u32(net.levels(), "L"));
  w.u32(meta.iteration);
  for (double s : net.schedule().sigmas()) w.f64(s);
  for (const auto& p : net.parameters()) {
    const Shape& shape = p.shape();
    w.u32(static_cast<std::uint32_t>(shape.rank()));
    for (int r = 0; r < shape.rank(); ++r) w.u32(detail::checked_u32(shape.dim(r), "dimension"));
    for (double v : p.value().values()) w.f64(v);
  }
  w.u64(meta.seed);
  w.u32(static_cast<std::uint32_t>(meta.objective));
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::string bytes) {
  detail::ByteReader r(std::move(bytes));
  const std::string magic = r.take(4, "magic");
  if (magic != std::string(kCheckpointMagic.data(), kCheckpointMagic.size()))
    throw BadMagicError("checkpoint: bad magic bytes");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint: file version " + std::to_string(version) + ", supported version " +
                       std::to_string(kCheckpointVersion));
  Checkpoint ck;
  ck.shape.dim = r.u32("D");
  ck.shape.hidden = r.u32("W");
  ck.shape.layers = r.u32("H");
  const std::uint32_t levels = r.u32("L");
  ck.meta.iteration = r.u32("iteration");
  if (ck.shape.dim == 0 || ck.shape.hidden == 0 || ck.shape.layers == 0 || levels == 0)
    throw CorruptError("checkpoint: zero dimension in header");
  std::vector<double> sigmas;
  for (std::uint32_t i = 0; i < levels; ++i) sigmas.push_back(r.f64("sigma"));
  try {
    ck.schedule = NoiseSchedule(sigmas);
  } catch (const Error& e) {
    throw CorruptError(std::string("checkpoint: invalid schedule: ") + e.what());
  }
  for (const Shape& expected : NcsnMlp::expected_shapes(ck.shape, levels)) {
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank != static_cast<std::uint32_t>(expected.rank()))
      throw CorruptError("checkpoint: tensor rank " + std::to_string(rank) + ", expected " + std::to_string(expected.rank()));
    Shape shape;
    if (rank == 1) shape = Shape(r.u32("tensor dim"));
    else if (rank == 2) {
      const std::uint32_t a = r.u32("tensor dim");
      const std::uint32_t b = r.u32("tensor dim");
      shape = Shape(a, b);
    }
    if (!(shape == expected))
      throw CorruptError("checkpoint: tensor shape " + shape.str() + ", expected " + expected.str());
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64("tensor values");
    ck.params.push_back(std::move(t));
  }
  ck.meta.seed = r.u64("seed");
  const std::uint32_t objective = r.u32("objective");
  if (objective > static_cast<std::uint32_t>(Objective::Ncsn)) throw CorruptError("checkpoint: unknown objective code");
  ck.meta.objective = static_cast<Objective>(objective);
  if (r.remaining() != 0) throw CorruptError("checkpoint: " + std::to_string(r.remaining()) + " trailing bytes");
  return ck;
}

inline void save_checkpoint(const NcsnMlp& net, const TrainingMeta& meta, const std::filesystem::path& path) {
  csv::atomic_write(path, encode_checkpoint(net, meta));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(bytes));
}

}  // namespace ncsn
