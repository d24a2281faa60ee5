#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace stratdef {

// Shortest decimal form that round-trips exactly (std::to_chars).
std::string fmt_double(double v);

// Fixed-point form, e.g. fmt_fixed(0.5, 6) == "0.500000".
std::string fmt_fixed(double v, int precision);

double parse_double(std::string_view s, const std::string& context);
long long parse_int(std::string_view s, const std::string& context);

std::vector<std::string> split_ws(std::string_view line);
std::vector<std::string> split_on(std::string_view line, char sep);
std::string_view trim(std::string_view s);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     std::string_view content);

}  // namespace stratdef
