#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "relsim/core.hpp"

namespace testutil {

inline relsim::QuantTensor random_tensor(relsim::SeededStream& rng, std::size_t r, std::size_t c, int lo, int hi,
                                         double scale = 1.0) {
  std::vector<std::int8_t> v(r * c);
  for (auto& e : v) e = static_cast<std::int8_t>(lo + int(rng.below(std::uint64_t(hi - lo + 1))));
  return relsim::QuantTensor({r, c}, std::move(v), scale);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("relsim_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
