#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tactile/data.hpp"
#include "tactile/error.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "run") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("tactile_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline tactile::TactileTensor random_tensor(tactile::Shape4 shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> v(shape.size());
  for (auto& x : v) x = normal(rng);
  return tactile::TactileTensor(shape, std::move(v));
}

template <typename Fn>
tactile::ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const tactile::Error& e) {
    return e.code();
  }
  throw std::logic_error("expected a tactile::Error");
}

template <typename Fn>
std::string error_message_of(Fn&& fn) {
  try {
    fn();
  } catch (const tactile::Error& e) {
    return e.what();
  }
  throw std::logic_error("expected a tactile::Error");
}

}  // namespace testing
