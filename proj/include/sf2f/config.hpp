#pragma once

#include <map>
#include <string>
#include <string_view>

namespace sf2f {

/// Ordered key=value pairs. Parsing skips blank lines and '#' comments and
/// trims whitespace around keys and values.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values_file(const std::string& path);
std::string format_key_values(const KeyValues& kv);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

double kv_double(const KeyValues& kv, const std::string& key, double fallback);
long long kv_int(const KeyValues& kv, const std::string& key, long long fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);

}  // namespace sf2f
