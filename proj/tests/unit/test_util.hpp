#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "coldrec/types.hpp"

namespace coldrec::test {

// Fresh scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("coldrec_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline Mat random_mat(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                      double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Mat m(rows, cols);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

}  // namespace coldrec::test
