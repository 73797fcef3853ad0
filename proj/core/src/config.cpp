#include "iplforge/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "iplforge/error.hpp"

namespace iplforge {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

const std::string& ConfigBlock::require(const std::string& key) const {
  auto it = entries.find(key);
  if (it == entries.end()) {
    throw ConfigError("block '" + kind + "' (line " + std::to_string(line) +
                      ") is missing key '" + key + "'");
  }
  return it->second;
}

std::string ConfigBlock::get(const std::string& key,
                             const std::string& fallback) const {
  auto it = entries.find(key);
  return it == entries.end() ? fallback : it->second;
}

bool ConfigBlock::has(const std::string& key) const {
  return entries.count(key) != 0;
}

double ConfigBlock::require_double(const std::string& key) const {
  const std::string& raw = require(key);
  try {
    std::size_t used = 0;
    double value = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("block '" + kind + "': key '" + key +
                      "' is not a number: '" + raw + "'");
  }
}

long long ConfigBlock::require_int(const std::string& key) const {
  const std::string& raw = require(key);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
  if (ec != std::errc() || ptr != raw.data() + raw.size()) {
    throw ConfigError("block '" + kind + "': key '" + key +
                      "' is not an integer: '" + raw + "'");
  }
  return value;
}

double ConfigBlock::get_double(const std::string& key, double fallback) const {
  return has(key) ? require_double(key) : fallback;
}

long long ConfigBlock::get_int(const std::string& key,
                               long long fallback) const {
  return has(key) ? require_int(key) : fallback;
}

std::vector<ConfigBlock> parse_config_text(const std::string& text) {
  std::vector<ConfigBlock> blocks;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) {
      raw.erase(hash);
    }
    const std::string line = trim(raw);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      // Bare keyword: starts a new block.
      blocks.push_back(ConfigBlock{line, {}, lineno});
      continue;
    }
    if (blocks.empty()) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": key-value pair before any block keyword");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    }
    auto [it, inserted] = blocks.back().entries.emplace(key, value);
    if (!inserted) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" +
                        key + "' in block '" + blocks.back().kind + "'");
    }
  }
  return blocks;
}

std::vector<ConfigBlock> load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace iplforge
