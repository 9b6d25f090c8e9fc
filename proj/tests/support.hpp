// Shared helpers for the unit tests.
#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include <survfuse/core.hpp>
#include <survfuse/types.hpp>

namespace survfuse::testkit {

/// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("survfuse_" + tag + "_" + hex64(fnv1a64(tag, static_cast<std::uint64_t>(::getpid()))));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& x : m.data) x = scale * rng.normal();
  return m;
}

/// Random right-censored outcomes; times on a coarse lattice when `ties`.
inline std::vector<Outcome> random_outcomes(std::size_t n, Rng& rng, bool ties = false, double event_rate = 0.6) {
  std::vector<Outcome> o(n);
  for (auto& x : o) {
    x.time = ties ? 0.5 * static_cast<double>(1 + rng.index(8)) : rng.uniform(0.05, 5.0);
    x.event = rng.bernoulli(event_rate);
  }
  return o;
}

}  // namespace survfuse::testkit
