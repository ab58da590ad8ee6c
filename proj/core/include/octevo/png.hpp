#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace octevo {

// Minimal 8-bit grayscale PNG encoder (zlib deflate, filter type 0).
std::vector<std::uint8_t> encode_gray_png(
    const std::vector<std::uint8_t>& pixels, int64_t h, int64_t w);

void write_gray_png(const std::string& path,
                    const std::vector<std::uint8_t>& pixels, int64_t h,
                    int64_t w);

// Paste equally sized grayscale tiles left to right with a 2-px white
// gutter between them and write the strip as one PNG.
void write_tile_strip_png(const std::string& path,
                          const std::vector<std::vector<std::uint8_t>>& tiles,
                          int64_t h, int64_t w);

}  // namespace octevo
