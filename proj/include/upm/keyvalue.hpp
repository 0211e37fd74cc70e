// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace upm {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
/// Throws InputError naming the line when a line has no '='.
std::vector<KeyValue> parse_key_values(std::string_view text);

double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);
/// Comma-separated list of doubles.
std::vector<double> parse_double_list(std::string_view text, std::string_view what);
std::string_view trim(std::string_view s);

}  // namespace upm
