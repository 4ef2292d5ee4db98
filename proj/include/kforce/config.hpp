#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace kforce::config {

/// Flat `key = value` text file. Values are numbers, bare or quoted strings,
/// or bracketed lists `[a, b]`. `#` starts a comment.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& is, const std::string& source = "<stream>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  double number(const std::string& key) const;
  long integer(const std::string& key) const;
  std::string string(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;

  void set(const std::string& key, std::vector<std::string> tokens, bool list);
  std::vector<std::string> keys() const;
  /// One `key = value` line per entry, keys sorted.
  std::string render() const;

 private:
  struct Entry {
    std::vector<std::string> tokens;
    bool list = false;
  };
  const Entry& entry(const std::string& key) const;
  std::map<std::string, Entry> entries_;
};

/// Shortest text that parses back to the same double.
std::string format_number(double v);

}  // namespace kforce::config
