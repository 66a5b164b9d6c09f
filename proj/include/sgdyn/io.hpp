#pragma once

// File output helpers shared by the restart writer and the CLI.

#include <string>
#include <string_view>

namespace sgdyn {

// Writes to a sibling temporary file and renames it over `path`, so readers
// never see a partially written file.  Throws IoError.
void atomic_write(const std::string& path, std::string_view data);
std::string read_file(const std::string& path);  // throws IoError

// 17 significant digits, enough to read back the identical double.
std::string format_double(double x);

}  // namespace sgdyn
