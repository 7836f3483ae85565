#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "tnd/nn.hpp"
#include "tnd/tensor.hpp"

namespace tnd::test {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("tnd-test-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Tensor uniform_tensor(const Shape& shape, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

/// conv-relu-pool-conv-relu-pool-flatten-dense-relu-dense on a (2, 8, 8) input, He-initialised.
inline Network toy_cnn(std::uint64_t seed, std::size_t classes = 3) {
  const Shape in{2, 8, 8};
  return Network::initialized(in,
                              {LayerSpec::conv2d(2, 3, 3, Padding::same, 1.0 / 255.0), LayerSpec::relu(),
                               LayerSpec::max_pool(), LayerSpec::conv2d(3, 4, 3, Padding::valid), LayerSpec::relu(),
                               LayerSpec::max_pool(), LayerSpec::flatten(), LayerSpec::dense(4, 6), LayerSpec::relu(),
                               LayerSpec::dense(6, classes)},
                              seed);
}

}  // namespace tnd::test
