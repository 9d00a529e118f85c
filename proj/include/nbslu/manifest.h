#ifndef NBSLU_MANIFEST_H_
#define NBSLU_MANIFEST_H_

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "nbslu/corpus.h"

namespace nbslu {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Everything needed to re-run a command bit-exactly: resolved config, input
// locations with content hashes, and seeds.
struct RunManifest {
  std::string subcommand;
  nlohmann::ordered_json config;
  nlohmann::ordered_json inputs;
  std::map<std::string, std::string> data_hashes;
  std::map<std::string, uint64_t> seeds;
  std::string version = kToolkitVersion;
  std::string started_at;
  std::string finished_at;
  std::string status = "running";
  nlohmann::ordered_json results;

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);

  // Writes via a temporary file and rename.
  void write(const std::filesystem::path& path) const;
  static RunManifest read(const std::filesystem::path& path);
};

// FNV-1a of the canonical serialization, as 16 hex digits.
std::string content_hash(const DatasetSplit& split);
std::string utc_timestamp();

}  // namespace nbslu

#endif  // NBSLU_MANIFEST_H_
