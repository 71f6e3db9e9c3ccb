#include "sf2f/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sf2f/error.hpp"

namespace sf2f {

namespace {
std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}
}  // namespace

KeyValues parse_key_values(std::string_view text) {
    KeyValues kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                        std::string(line) + "'");
        }
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw Error("config line " + std::to_string(line_no) + ": empty key");
        kv[key] = std::string(trim(line.substr(eq + 1)));
    }
    return kv;
}

KeyValues read_key_values_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    double v = 0.0;
    const auto& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw Error("config key '" + key + "': expected a number, got '" + s + "'");
    }
    return v;
}

long long kv_int(const KeyValues& kv, const std::string& key, long long fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    long long v = 0;
    const auto& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw Error("config key '" + key + "': expected an integer, got '" + s + "'");
    }
    return v;
}

bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const auto& s = it->second;
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    throw Error("config key '" + key + "': expected a boolean, got '" + s + "'");
}

std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

}  // namespace sf2f
