#pragma once

#include <string>

namespace spot::io {

// Writes via a sibling temp file and rename, so readers never observe a
// half-written artifact.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

bool file_exists(const std::string& path);

// FNV-1a 64 digest of the file bytes, rendered as fixed-width hex.
std::string file_digest(const std::string& path);

}  // namespace spot::io
