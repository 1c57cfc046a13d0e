#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace knowslm::io {

// Throws Error(missing_input) when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

// Creates parent directories; writes bytes verbatim.
void write_file(const std::filesystem::path& path, std::string_view data);

}  // namespace knowslm::io
