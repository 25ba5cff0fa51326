#include "opts/text.hpp"

#include <cctype>

namespace opts::text {

namespace {

bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

char lower(char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

}  // namespace

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = lower(c);
    return out;
}

std::size_t rfind_ci(std::string_view haystack, std::string_view needle) {
    if (needle.size() > haystack.size()) {
        return std::string_view::npos;
    }
    for (std::size_t pos = haystack.size() - needle.size() + 1; pos-- > 0;) {
        bool match = true;
        for (std::size_t i = 0; i < needle.size(); ++i) {
            if (lower(haystack[pos + i]) != lower(needle[i])) {
                match = false;
                break;
            }
        }
        if (match) {
            return pos;
        }
    }
    return std::string_view::npos;
}

std::vector<std::string_view> split_lines(std::string_view s) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto eol = s.find('\n', start);
        auto line = s.substr(start, eol == std::string_view::npos ? s.size() - start : eol - start);
        if (eol == std::string_view::npos) {
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.push_back(line);
            break;
        }
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = eol + 1;
    }
    return lines;
}

}  // namespace opts::text
