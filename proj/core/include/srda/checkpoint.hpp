#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "srda/error.hpp"
#include "srda/tensor.hpp"

namespace srda {

enum class CheckpointErrorKind {
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kUnknownArray,
  kMissingArray,
  kShapeMismatch,
  kDtypeMismatch,
};

const char* checkpoint_error_kind_name(CheckpointErrorKind kind);

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& message)
      : Error(message), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;
  std::int64_t iteration = 0;
  std::map<std::string, Tensor> arrays;
  std::map<std::string, std::int64_t> integers;
};

// Layout: 8-byte magic, u32 version, u64-prefixed config JSON, i64
// iteration, u64 record count, then per record a u32-prefixed name, a dtype
// tag (0 f32, 1 f64, 2 i64), four i64 extents, a u64 byte count and the raw
// little-endian values.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Bitwise equality of every array, integer, the iteration and the config.
bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

}  // namespace srda
