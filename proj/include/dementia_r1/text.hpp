#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dr1 {

// Shortest representation that round-trips: 27 -> "27", 0.5 -> "0.5".
std::string format_number(double value);

// Whole-string decimal parse; surrounding whitespace is ignored.
std::optional<double> parse_number(std::string_view text);

std::string_view trim(std::string_view text);

std::vector<std::string_view> split(std::string_view text, char sep);

}  // namespace dr1
