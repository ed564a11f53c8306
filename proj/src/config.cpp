#include "tsrcan/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "tsrcan/errors.hpp"

namespace tsr {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& text, const std::string& key, const std::string& source) {
  N v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(source + ": key '" + key + "' has invalid value '" + text + "'");
  }
  return v;
}

}  // namespace

KeyValues parse_key_values(std::istream& is, const std::string& source) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  return parse_key_values(f, path.string());
}

void write_key_values(std::ostream& os, const KeyValues& kv) {
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

void write_key_values(const std::filesystem::path& path, const KeyValues& kv) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  write_key_values(f, kv);
}

const std::string* KeyReader::find(const std::string& key) {
  used_.insert(key);
  auto it = kv_.find(key);
  return it == kv_.end() ? nullptr : &it->second;
}

std::string KeyReader::get_string(const std::string& key, const std::string& fallback) {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

std::string KeyReader::require_string(const std::string& key) {
  const std::string* v = find(key);
  if (!v) throw ConfigError(source_ + ": missing key '" + key + "'");
  return *v;
}

int KeyReader::get_int(const std::string& key, int fallback) {
  const std::string* v = find(key);
  return v ? parse_number<int>(*v, key, source_) : fallback;
}

std::uint64_t KeyReader::get_u64(const std::string& key, std::uint64_t fallback) {
  const std::string* v = find(key);
  return v ? parse_number<std::uint64_t>(*v, key, source_) : fallback;
}

double KeyReader::get_double(const std::string& key, double fallback) {
  const std::string* v = find(key);
  return v ? parse_number<double>(*v, key, source_) : fallback;
}

bool KeyReader::get_bool(const std::string& key, bool fallback) {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw ConfigError(source_ + ": key '" + key + "' expects true/false, got '" + *v + "'");
}

void KeyReader::finish() const {
  std::string unknown;
  for (const auto& [k, v] : kv_) {
    if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError(source_ + ": unknown key(s): " + unknown);
}

}  // namespace tsr
