#pragma once

#include <cstdarg>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace auginv {

// printf-style formatting into a std::string.
std::string strf(const char* fmt, ...) __attribute__((format(printf, 1, 2)));

// Shortest round-trippable decimal for a double ("%.17g" trimmed via %.9g
// is not round-trip safe; CSV output uses a fixed "%.9g" which is bit-stable
// for identical inputs, which is what the run artifacts require).
std::string g9(double v);
// 6 significant digits, for invariance.csv sigma values.
std::string g6(double v);

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

std::string read_text_file(const std::filesystem::path& p);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, const std::string& content);

}  // namespace auginv
