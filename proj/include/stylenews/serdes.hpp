// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stylenews {

// Little-endian binary blobs for parameter vectors. Byte-exact round trips
// are what make the reproducibility and resume guarantees checkable.
void write_doubles(const std::filesystem::path& path, const std::vector<double>& data);
std::vector<double> read_doubles(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// FNV-1a over bytes; used for config-manifest and vocabulary hashes.
uint64_t fnv1a(const void* data, size_t n);
uint64_t fnv1a(const std::string& s);
std::string to_hex(uint64_t v);

}  // namespace stylenews
