#include "nbslu/manifest.h"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "nbslu/config.h"
#include "nbslu/random.h"

namespace nbslu {

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["version"] = version;
  j["status"] = status;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["config"] = config;
  j["inputs"] = inputs;
  j["data_hashes"] = data_hashes;
  j["seeds"] = seeds;
  j["results"] = results;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  m.subcommand = j.at("subcommand").get<std::string>();
  m.version = j.value("version", std::string());
  m.status = j.value("status", std::string());
  m.started_at = j.value("started_at", std::string());
  m.finished_at = j.value("finished_at", std::string());
  m.config = j.value("config", nlohmann::ordered_json::object());
  m.inputs = j.value("inputs", nlohmann::ordered_json::object());
  m.data_hashes = j.value("data_hashes", std::map<std::string, std::string>{});
  m.seeds = j.value("seeds", std::map<std::string, uint64_t>{});
  m.results = j.value("results", nlohmann::ordered_json::object());
  return m;
}

void RunManifest::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << to_json().dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

RunManifest RunManifest::read(const std::filesystem::path& path) { return from_json(read_json(path)); }

std::string content_hash(const DatasetSplit& split) {
  std::ostringstream os;
  write_canonical(split, os);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(os.str())));
  return buf;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace nbslu
