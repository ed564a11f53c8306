#pragma once

// Plain "key = value" text used by presets, checkpoints and dataset metadata.
// '#' starts a comment; keys are unique.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>

namespace tsr {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& is, const std::string& source);
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(std::ostream& os, const KeyValues& kv);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

// Typed access that remembers which keys were read, so that leftovers can be
// rejected as unknown.
class KeyReader {
 public:
  KeyReader(KeyValues kv, std::string source) : kv_(std::move(kv)), source_(std::move(source)) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback);
  std::string require_string(const std::string& key);
  int get_int(const std::string& key, int fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);

  // Marks a key as known without reading it.
  void ignore(const std::string& key) { used_.insert(key); }
  // Throws ConfigError naming every key that was never read.
  void finish() const;

 private:
  const std::string* find(const std::string& key);

  KeyValues kv_;
  std::string source_;
  std::set<std::string> used_;
};

}  // namespace tsr
