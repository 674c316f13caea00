#pragma once

// Tensor files and small file utilities.
//
// A tensor is stored as a JSON manifest
//   {"name": ..., "dims": [...], "scale": ..., "dtype": "i8", "file": "<blob>"}
// next to a raw blob whose byte k is element k of the row-major flattening as
// a two's-complement signed byte. The blob path is relative to the manifest.

#include <filesystem>
#include <string>

#include "relsim/core.hpp"

namespace relsim {

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::filesystem::path path, std::string field = "")
      : std::runtime_error(what + ": " + path.string()), path_(std::move(path)), field_(std::move(field)) {}
  const std::filesystem::path& path() const { return path_; }
  /// Offending manifest field, if any.
  const std::string& field() const { return field_; }

 private:
  std::filesystem::path path_;
  std::string field_;
};

/// Writes manifest_path and a sibling "<stem>.bin" blob.
void save_tensor(const std::filesystem::path& manifest_path, const QuantTensor& t, const std::string& name);
QuantTensor load_tensor(const std::filesystem::path& manifest_path);

std::string read_text_file(const std::filesystem::path& path);

/// Write to a temp file in the same directory, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace relsim
