#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace saad {

/// Shortest decimal form that parses back to the same double; "inf"/"-inf"
/// for infinities.
std::string format_double(double v);
double parse_double(std::string_view s);
int64_t parse_int(std::string_view s);
uint64_t parse_uint(std::string_view s);
bool parse_bool(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Ordered key=value lines; '#' starts a comment line.
struct KeyValues {
  std::vector<std::pair<std::string, std::string>> entries;

  bool contains(const std::string& key) const;
  const std::string& at(const std::string& key) const;
  void set(const std::string& key, std::string value);
  std::string to_text() const;
};

KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace saad
