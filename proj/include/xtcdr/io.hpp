// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace xtcdr::io {

/// Writes `contents` to a temporary sibling of `path`, then renames it into
/// place. Parent directories are created as needed.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace xtcdr::io
