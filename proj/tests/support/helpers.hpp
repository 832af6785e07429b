#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "srda/random.hpp"
#include "srda/tensor.hpp"

namespace srda::test {

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0, DType dtype = DType::kFloat64) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(shape.numel()));
  for (double& x : v) x = rng.uniform(lo, hi);
  Tensor t = Tensor::from_data(shape, std::move(v));
  return dtype == DType::kFloat64 ? t : t.to(dtype);
}

// Small integers keep every product and partial sum exact in 64-bit floats, so
// kernels with different summation orders must agree bit for bit.
inline Tensor random_int_tensor(const Shape& shape, std::uint64_t seed, int range = 3) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(shape.numel()));
  for (double& x : v) x = static_cast<double>(rng.range(-range, range));
  return Tensor::from_data(shape, std::move(v));
}

inline LabelMap random_labels(std::int64_t n, std::int64_t h, std::int64_t w, int classes,
                              std::uint64_t seed) {
  Rng rng(seed);
  LabelMap m(n, h, w);
  for (auto& v : m.values) v = static_cast<std::uint8_t>(rng.index(classes));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  const auto x = a.to_vector(), y = b.to_vector();
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  return worst;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("srda_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& rel) const { return (path_ / rel).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string source_path(const std::string& rel) { return std::string(SRDA_SOURCE_DIR) + "/" + rel; }

}  // namespace srda::test
