#pragma once

#include <map>
#include <regex>
#include <string>
#include <string_view>

namespace opts {

// Texts shipped under data/ and compiled into the binary.
namespace embedded {
std::string_view strategies_json();
std::string_view opts_system();
std::string_view opts_user();
std::string_view ga_user();
std::string_view de_user();
std::string_view init_variations();
std::string_view resample();
}  // namespace embedded

// Replaces placeholder tags in one left-to-right pass over `text`; inserted
// values are never rescanned. Every tag matching `family` must have a value,
// and every value's tag must occur exactly once. Violations throw
// TemplateError.
std::string fill_placeholders(std::string_view text, const std::map<std::string, std::string>& values,
                              const std::regex& family);

}  // namespace opts
