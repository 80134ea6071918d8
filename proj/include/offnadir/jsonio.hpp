#pragma once
// JSON file helpers. ordered_json keeps key order stable so serialized
// artifacts are byte-reproducible.

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "offnadir/common.hpp"

namespace offnadir {

using Json = nlohmann::ordered_json;

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  ON_CHECK(in.good(), "cannot open '%s'", path.c_str());
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(strfmt("bad JSON in '%s': %s", path.c_str(), e.what()));
  }
  return j;
}

inline void save_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  ON_CHECK(out.good(), "cannot write '%s'", path.c_str());
  out << j.dump(2) << '\n';
  ON_CHECK(out.good(), "write failed for '%s'", path.c_str());
}

inline uint64_t json_hash(const Json& j) { return fnv1a64(j.dump()); }

inline void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  ON_CHECK(!ec, "cannot create directory '%s': %s", path.c_str(),
           ec.message().c_str());
}

}  // namespace offnadir
