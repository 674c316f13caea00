#include "relsim/io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace relsim {

namespace fs = std::filesystem;
using nlohmann::json;

void save_tensor(const fs::path& manifest_path, const QuantTensor& t, const std::string& name) {
  fs::path blob = manifest_path;
  blob.replace_extension(".bin");
  std::string bytes(t.size(), '\0');
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) bytes[i] = static_cast<char>(static_cast<std::uint8_t>(d[i]));
  write_file_atomic(blob, bytes);

  json m;
  m["name"] = name;
  m["dims"] = t.dims();
  m["scale"] = t.scale();
  m["dtype"] = "i8";
  m["file"] = blob.filename().string();
  write_file_atomic(manifest_path, m.dump(2) + "\n");
}

QuantTensor load_tensor(const fs::path& manifest_path) {
  json m;
  try {
    m = json::parse(read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw IoError(std::string("malformed tensor manifest (") + e.what() + ")", manifest_path);
  }
  if (!m.is_object()) throw IoError("tensor manifest is not a JSON object", manifest_path);
  for (const char* key : {"dims", "scale", "dtype", "file"})
    if (!m.contains(key))
      throw IoError(std::string("tensor manifest missing field '") + key + "'", manifest_path, key);
  if (m["dtype"] != "i8") throw IoError("unsupported tensor dtype " + m["dtype"].dump(), manifest_path, "dtype");

  auto field = [&](const char* key, auto fallback) {
    try {
      return m[key].get<decltype(fallback)>();
    } catch (const json::exception&) {
      throw IoError(std::string("tensor manifest field '") + key + "' has the wrong type", manifest_path, key);
    }
  };
  Dims dims = field("dims", Dims{});
  const double scale = field("scale", 0.0);
  fs::path blob = manifest_path.parent_path() / field("file", std::string{});
  if (dims.empty() || !(scale > 0.0)) throw IoError("tensor manifest has empty dims or a non-positive scale", manifest_path,
                                                    dims.empty() ? "dims" : "scale");

  std::string bytes = read_text_file(blob);
  if (bytes.size() != element_count(dims))
    throw IoError("tensor blob has " + std::to_string(bytes.size()) + " bytes, dims " + dims_to_string(dims) +
                      " need " + std::to_string(element_count(dims)),
                  blob);
  std::vector<std::int8_t> data(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    data[i] = static_cast<std::int8_t>(static_cast<std::uint8_t>(bytes[i]));
  return QuantTensor(std::move(dims), std::move(data), scale);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file", tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write", tmp);
  }
  fs::rename(tmp, path);
}

}  // namespace relsim
