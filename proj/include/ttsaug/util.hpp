// Shared string/file helpers.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ttsaug {

// FNV-1a 64-bit content digest, rendered as 16 hex chars. Used as the
// text-content component of synthesis cache keys.
uint64_t fnv1a64(const std::string& data);
std::string content_digest(const std::string& data);

std::string lowercase(std::string s);
std::string trim(const std::string& s);  // strips ASCII whitespace at both ends
std::vector<std::string> split(const std::string& s, char sep);
std::string join(const std::vector<std::string>& parts, const std::string& sep);
bool starts_with(const std::string& s, const std::string& prefix);

std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Write-to-temp + rename. The destination never exists in a partial state.
void write_file_atomic(const std::filesystem::path& path, const std::string& data);

// Round-trippable decimal rendering of a double (shortest exact form).
std::string format_double(double v);

}  // namespace ttsaug
