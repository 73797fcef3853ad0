#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace iplforge {

// One block of a line-oriented config file. A block starts at a bare keyword
// line (e.g. "language") and collects the "key = value" lines that follow it
// until the next keyword line. '#' starts a comment; blank lines are ignored.
struct ConfigBlock {
  std::string kind;
  std::map<std::string, std::string> entries;
  std::size_t line = 0;  // 1-based line of the keyword, for error messages

  // Lookup helpers. The require_* variants raise ConfigError naming the block
  // and key; get() returns fallback when the key is absent.
  const std::string& require(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  bool has(const std::string& key) const;

  double require_double(const std::string& key) const;
  long long require_int(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
};

std::vector<ConfigBlock> parse_config_text(const std::string& text);
std::vector<ConfigBlock> load_config_file(const std::filesystem::path& path);

}  // namespace iplforge
