#include "rewardkit/io.hpp"

#include <charconv>
#include <cmath>

#include "rewardkit/error.hpp"

namespace rewardkit::io {

void for_each_jsonl(std::istream& in,
                    const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json parsed = nlohmann::json::parse(line, nullptr, false);
    if (parsed.is_discarded()) {
      throw InputError("invalid JSON on line " + std::to_string(line_no), line_no);
    }
    fn(line_no, parsed);
  }
}

std::string csv_field(const std::string& value) {
  bool needs_quotes = value.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quotes) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string pretty(const nlohmann::json& value) {
  return value.dump(2) + "\n";
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace rewardkit::io
