#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sf2f {

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace sf2f
