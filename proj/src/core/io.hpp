#pragma once

#include <string>
#include <string_view>

namespace mnp {

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
void ensure_directory(const std::string& path);

/// Git blob id (SHA-1 over "blob <len>\0" + contents), lowercase hex.
std::string content_hash(std::string_view contents);

}  // namespace mnp
