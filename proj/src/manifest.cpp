#include "rewardkit/manifest.hpp"

#include <fstream>

#include "rewardkit/error.hpp"
#include "rewardkit/io.hpp"

namespace rewardkit {

nlohmann::json RunManifest::to_json() const {
  nlohmann::json doc = {{"subcommand", subcommand},
                        {"tool_version", tool_version},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"options", options}};
  if (seed) doc["seed"] = *seed;
  return doc;
}

RunManifest RunManifest::from_json(const nlohmann::json& doc) {
  RunManifest m;
  m.subcommand = doc.value("subcommand", "");
  m.tool_version = doc.value("tool_version", "");
  if (doc.contains("seed")) m.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("inputs")) {
    m.inputs = doc.at("inputs").get<std::map<std::string, std::string>>();
  }
  if (doc.contains("outputs")) {
    m.outputs = doc.at("outputs").get<std::map<std::string, std::string>>();
  }
  if (doc.contains("options")) m.options = doc.at("options");
  return m;
}

void RunManifest::write_alongside(const std::string& primary_output) const {
  std::string path = primary_output + ".manifest.json";
  std::ofstream out(path);
  if (!out) throw InputError("cannot write manifest '" + path + "'");
  out << io::pretty(to_json());
}

}  // namespace rewardkit
