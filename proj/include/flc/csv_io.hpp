#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace flc::io {

/// Shortest decimal that parses back to the same double.
std::string format_double(double value);
void append_double(std::string& out, double value);

/// Throws ConfigError on malformed numbers.
double parse_double(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Whole-file helpers; throw IoError.
void write_text(const std::string& path, std::string_view content);
std::string read_text(const std::string& path);

}  // namespace flc::io
