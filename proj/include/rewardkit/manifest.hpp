#pragma once

#include <map>
#include <optional>
#include <string>

#include "json.hpp"

namespace rewardkit {

inline constexpr const char* kVersion = "0.1.0";

// Reproducibility record written alongside every CLI output: re-running the
// recorded subcommand with the recorded inputs and options must reproduce the
// outputs byte for byte.
struct RunManifest {
  std::string subcommand;
  std::string tool_version = kVersion;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> inputs;   // role -> path
  std::map<std::string, std::string> outputs;  // role -> path
  nlohmann::json options = nlohmann::json::object();

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);

  // Writes pretty JSON to <primary_output>.manifest.json.
  void write_alongside(const std::string& primary_output) const;
};

}  // namespace rewardkit
