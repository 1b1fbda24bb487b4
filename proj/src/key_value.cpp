#include "frangi/key_value.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "frangi/error.hpp"

namespace frangi {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

std::vector<KeyValue> parse_key_values(std::istream& in)
{
    std::vector<KeyValue> out;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (const auto hash = raw.find('#'); hash != std::string::npos)
            raw.erase(hash);
        const std::string text = trim(raw);
        if (text.empty())
            continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ParseError(line, "expected 'key = value'");
        KeyValue kv{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line};
        if (kv.key.empty())
            throw ParseError(line, "empty key");
        out.push_back(std::move(kv));
    }
    return out;
}

std::vector<KeyValue> parse_key_value_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + path.string());
    return parse_key_values(in);
}

double parse_double(const KeyValue& kv)
{
    const char* begin = kv.value.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v))
        throw ParseError(kv.line, "'" + kv.key + "' expects a number, got '" + kv.value + "'");
    return v;
}

long long parse_integer(const KeyValue& kv)
{
    const char* begin = kv.value.c_str();
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(begin, &end, 10);
    if (end == begin || *end != '\0' || errno == ERANGE)
        throw ParseError(kv.line, "'" + kv.key + "' expects an integer, got '" + kv.value + "'");
    return v;
}

std::vector<double> parse_double_list(const KeyValue& kv)
{
    std::istringstream ss(kv.value);
    std::vector<double> out;
    std::string tok;
    while (ss >> tok)
        out.push_back(parse_double(KeyValue{kv.key, tok, kv.line}));
    return out;
}

} // namespace frangi
