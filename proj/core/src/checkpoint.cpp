#include "srda/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <type_traits>
#include <vector>

namespace srda {

const char* checkpoint_error_kind_name(CheckpointErrorKind kind) {
  switch (kind) {
    case CheckpointErrorKind::kIo: return "io";
    case CheckpointErrorKind::kBadMagic: return "bad magic";
    case CheckpointErrorKind::kVersionMismatch: return "version mismatch";
    case CheckpointErrorKind::kTruncated: return "truncated";
    case CheckpointErrorKind::kUnknownArray: return "unknown array";
    case CheckpointErrorKind::kMissingArray: return "missing array";
    case CheckpointErrorKind::kShapeMismatch: return "shape mismatch";
    case CheckpointErrorKind::kDtypeMismatch: return "dtype mismatch";
  }
  return "?";
}

namespace {

constexpr char kMagic[8] = {'S', 'R', 'D', 'A', 'C', 'K', 'P', 'T'};
enum Tag : std::uint8_t { kTagF32 = 0, kTagF64 = 1, kTagI64 = 2 };

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    buf_.insert(buf_.end(), bytes, bytes + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  template <typename T>
  void put_values(std::span<const T> values) {
    if constexpr (std::endian::native == std::endian::little) {
      put_bytes(values.data(), values.size_bytes());
    } else {
      for (T v : values) put(v);
    }
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointError(CheckpointErrorKind::kTruncated,
                            "checkpoint '" + path_ + "' is truncated while reading " + what);
    }
  }
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }
  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  std::vector<T> get_values(std::size_t count, const char* what) {
    need(count * sizeof(T), what);
    std::vector<T> out(count);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), data_.data() + pos_, count * sizeof(T));
      pos_ += count * sizeof(T);
    } else {
      for (auto& v : out) v = get<T>(what);
    }
    return out;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::vector<char> data_;
  std::string path_;
  std::size_t pos_ = 0;
};

void put_record_header(Writer& w, const std::string& name, Tag tag, const Shape& s, std::uint64_t bytes) {
  w.put(static_cast<std::uint32_t>(name.size()));
  w.put_bytes(name.data(), name.size());
  w.put(static_cast<std::uint8_t>(tag));
  w.put(s.n);
  w.put(s.c);
  w.put(s.h);
  w.put(s.w);
  w.put(bytes);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put(ckpt.version);
  w.put(static_cast<std::uint64_t>(ckpt.config_json.size()));
  w.put_bytes(ckpt.config_json.data(), ckpt.config_json.size());
  w.put(ckpt.iteration);
  w.put(static_cast<std::uint64_t>(ckpt.arrays.size() + ckpt.integers.size()));
  for (const auto& [name, t] : ckpt.arrays) {
    const Shape s = t.shape();
    if (t.dtype() == DType::kFloat32) {
      const auto v = t.data<float>();
      put_record_header(w, name, kTagF32, s, v.size_bytes());
      w.put_values(v);
    } else {
      const auto v = t.data<double>();
      put_record_header(w, name, kTagF64, s, v.size_bytes());
      w.put_values(v);
    }
  }
  for (const auto& [name, value] : ckpt.integers) {
    put_record_header(w, name, kTagI64, Shape{1, 1, 1, 1}, sizeof(std::int64_t));
    w.put(value);
  }
  // Write to a sibling file first so an interrupted save leaves the old one.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "cannot write checkpoint '" + path + "'");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "cannot write checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw CheckpointError(CheckpointErrorKind::kIo, "cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::kIo, "cannot open checkpoint '" + path + "'");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);

  if (r.remaining() < sizeof kMagic && r.remaining() > 0) {
    // A prefix of the magic is a truncated file, anything else is foreign.
    throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint '" + path + "' is truncated while reading magic");
  }
  const std::string magic = r.get_string(sizeof kMagic, "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "'" + path + "' is not a checkpoint (bad magic)");
  }
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>("version");
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::kVersionMismatch,
                          "checkpoint '" + path + "' has format version " + std::to_string(ckpt.version) +
                              ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto config_len = r.get<std::uint64_t>("config length");
  ckpt.config_json = r.get_string(config_len, "config");
  ckpt.iteration = r.get<std::int64_t>("iteration");
  const auto records = r.get<std::uint64_t>("record count");
  for (std::uint64_t i = 0; i < records; ++i) {
    const auto name_len = r.get<std::uint32_t>("record name length");
    const std::string name = r.get_string(name_len, "record name");
    const auto tag = r.get<std::uint8_t>("dtype tag");
    Shape s;
    s.n = r.get<std::int64_t>("shape");
    s.c = r.get<std::int64_t>("shape");
    s.h = r.get<std::int64_t>("shape");
    s.w = r.get<std::int64_t>("shape");
    const auto bytes = r.get<std::uint64_t>("record size");
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw CheckpointError(CheckpointErrorKind::kShapeMismatch, "checkpoint '" + path + "': array '" + name + "' has a negative extent");
    }
    const auto count = static_cast<std::uint64_t>(s.numel());
    auto expect_bytes = [&](std::uint64_t width) {
      if (bytes != count * width) {
        throw CheckpointError(CheckpointErrorKind::kShapeMismatch,
                              "checkpoint '" + path + "': array '" + name + "' byte count does not match its shape");
      }
    };
    switch (tag) {
      case kTagF32:
        expect_bytes(4);
        ckpt.arrays[name] = Tensor::from_data(s, r.get_values<float>(count, name.c_str()));
        break;
      case kTagF64:
        expect_bytes(8);
        ckpt.arrays[name] = Tensor::from_data(s, r.get_values<double>(count, name.c_str()));
        break;
      case kTagI64:
        expect_bytes(8);
        if (count != 1) {
          throw CheckpointError(CheckpointErrorKind::kShapeMismatch, "checkpoint '" + path + "': integer '" + name + "' is not a scalar");
        }
        ckpt.integers[name] = r.get<std::int64_t>(name.c_str());
        break;
      default:
        throw CheckpointError(CheckpointErrorKind::kDtypeMismatch,
                              "checkpoint '" + path + "': array '" + name + "' has unknown dtype tag " + std::to_string(tag));
    }
  }
  return ckpt;
}

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  if (a.version != b.version || a.config_json != b.config_json || a.iteration != b.iteration ||
      a.integers != b.integers || a.arrays.size() != b.arrays.size()) {
    return false;
  }
  for (const auto& [name, t] : a.arrays) {
    const auto it = b.arrays.find(name);
    if (it == b.arrays.end()) return false;
    const Tensor& u = it->second;
    if (t.shape() != u.shape() || t.dtype() != u.dtype()) return false;
    const bool same = t.dtype() == DType::kFloat32
                          ? std::memcmp(t.data<float>().data(), u.data<float>().data(), t.data<float>().size_bytes()) == 0
                          : std::memcmp(t.data<double>().data(), u.data<double>().data(), t.data<double>().size_bytes()) == 0;
    if (!same) return false;
  }
  return true;
}

}  // namespace srda
