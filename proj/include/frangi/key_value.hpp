#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

namespace frangi {

/// One `key = value` line; `line` is 1-based.
struct KeyValue {
    std::string key;
    std::string value;
    int line = 0;
};

/// Parses line-oriented `key = value` text. `#` starts a comment; blank lines
/// are ignored; keys and values are trimmed. Throws ParseError on lines
/// without '=' or with an empty key.
std::vector<KeyValue> parse_key_values(std::istream& in);
std::vector<KeyValue> parse_key_value_file(const std::filesystem::path& path);

double parse_double(const KeyValue& kv);
long long parse_integer(const KeyValue& kv);
std::vector<double> parse_double_list(const KeyValue& kv);

} // namespace frangi
