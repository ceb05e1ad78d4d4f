#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ktsnn {

// Flat `key = value` text. Blank lines and lines starting with '#' are
// skipped; later keys overwrite earlier ones.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);
// "key=value" as given to --set.
std::pair<std::string, std::string> parse_override(std::string_view text);

// Throws InvalidConfig naming the first key not in `allowed`.
void reject_unknown_keys(const KeyValues& kv, const std::vector<std::string>& allowed);

double parse_double(const KeyValues& kv, const std::string& key, double fallback);
long parse_int(const KeyValues& kv, const std::string& key, long fallback);
std::string parse_string(const KeyValues& kv, const std::string& key, const std::string& fallback);

std::string format_double(double v);  // 17 significant digits

}  // namespace ktsnn
