#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "dqpp/config.hpp"
#include "dqpp/convnet.hpp"
#include "dqpp/error.hpp"

namespace dqpp {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a 64-bit over a file's bytes; enough to detect changed inputs when
// re-running an experiment.
inline std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot open file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
    if (!is) break;
  }
  return h;
}

// Everything needed to re-run an experiment bit-identically: input paths
// with content hashes, the full train config, and the split plan reference.
struct ExperimentManifest {
  std::map<std::string, std::string> inputs;  // role -> path
  TrainConfig config;
  std::string split_plan_path;
  int split_index = -1;  // -1 means "all splits"
};

inline nlohmann::json manifest_to_json(const ExperimentManifest& m) {
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [role, path] : m.inputs) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(fnv1a_file(path)));
    inputs[role] = {{"path", path}, {"fnv1a64", hex}};
  }
  nlohmann::json j{{"tool_version", kToolVersion},
                   {"inputs", inputs},
                   {"config", config_to_json(m.config)}};
  if (!m.split_plan_path.empty()) j["split_plan"] = m.split_plan_path;
  if (m.split_index >= 0) j["split_index"] = m.split_index;
  return j;
}

inline void save_manifest(const ExperimentManifest& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write file: " + path);
  os << manifest_to_json(m).dump(2) << '\n';
}

}  // namespace dqpp
