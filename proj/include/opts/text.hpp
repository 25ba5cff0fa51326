#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace opts::text {

std::string_view trim(std::string_view s);
std::string ascii_lower(std::string_view s);

// Position of the last ASCII case-insensitive occurrence of needle, or npos.
std::size_t rfind_ci(std::string_view haystack, std::string_view needle);

std::vector<std::string_view> split_lines(std::string_view s);

}  // namespace opts::text
