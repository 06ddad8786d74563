#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include "tlr/corpus.hpp"

namespace tlr::testing {

inline std::filesystem::path data_dir() { return TLR_TEST_DATA_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tlr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

/// Writes `content` to `root/rel`, creating parent directories.
inline void put(const std::filesystem::path& root, const std::string& rel, const std::string& content) {
  std::filesystem::create_directories((root / rel).parent_path());
  write_file(root / rel, content);
}

}  // namespace tlr::testing
