#include "kforce/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>

#include "kforce/error.hpp"

namespace kforce::config {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

double to_double(const std::string& key, const std::string& tok) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + tok + "'");
  }
  return v;
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::istream& is, const std::string& source) {
  KeyValueFile f;
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + ": empty key or value");
    if (f.has(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    Entry e;
    if (value.front() == '[') {
      if (value.back() != ']') throw ConfigError(where + ": unterminated list");
      e.list = true;
      const std::string body = trim(value.substr(1, value.size() - 2));
      std::size_t pos = 0;
      while (!body.empty() && pos <= body.size()) {
        const auto comma = body.find(',', pos);
        const std::string item = trim(body.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (item.empty()) throw ConfigError(where + ": empty list element");
        e.tokens.push_back(unquote(item));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    } else {
      e.tokens.push_back(unquote(value));
    }
    f.entries_[key] = std::move(e);
  }
  return f;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  return parse(is, path.string());
}

const KeyValueFile::Entry& KeyValueFile::entry(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("config key '" + key + "' missing");
  return it->second;
}

double KeyValueFile::number(const std::string& key) const {
  const Entry& e = entry(key);
  if (e.list || e.tokens.size() != 1) throw ConfigError("config key '" + key + "': expected a scalar");
  return to_double(key, e.tokens.front());
}

long KeyValueFile::integer(const std::string& key) const {
  const Entry& e = entry(key);
  if (e.list || e.tokens.size() != 1) throw ConfigError("config key '" + key + "': expected a scalar");
  const std::string& tok = e.tokens.front();
  long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + tok + "'");
  }
  return v;
}

std::string KeyValueFile::string(const std::string& key) const {
  const Entry& e = entry(key);
  if (e.list || e.tokens.size() != 1) throw ConfigError("config key '" + key + "': expected a scalar");
  return e.tokens.front();
}

std::vector<double> KeyValueFile::numbers(const std::string& key) const {
  const Entry& e = entry(key);
  std::vector<double> out;
  for (const auto& t : e.tokens) out.push_back(to_double(key, t));
  return out;
}

void KeyValueFile::set(const std::string& key, std::vector<std::string> tokens, bool list) {
  entries_[key] = Entry{std::move(tokens), list};
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::string KeyValueFile::render() const {
  std::string out;
  for (const auto& [k, e] : entries_) {
    out += k + " = ";
    if (e.list) out += '[';
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      if (i) out += ", ";
      out += e.tokens[i];
    }
    if (e.list) out += ']';
    out += '\n';
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace kforce::config
