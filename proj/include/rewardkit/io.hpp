#pragma once

#include <functional>
#include <istream>
#include <string>

#include "json.hpp"

namespace rewardkit::io {

// Calls fn(line_number, parsed_json) for every non-blank line. Line numbers
// are 1-based. Throws InputError naming the line on malformed JSON.
void for_each_jsonl(std::istream& in,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn);

// RFC 4180 field quoting: fields containing comma, quote, CR or LF are
// wrapped in double quotes with embedded quotes doubled.
std::string csv_field(const std::string& value);

// Canonical JSON serialization used for every artifact we persist:
// 2-space indent, keys sorted (nlohmann::json orders object keys).
std::string pretty(const nlohmann::json& value);

// Fixed-format decimal rendering for CSV cells (shortest round-trip form).
std::string format_number(double value);

}  // namespace rewardkit::io
