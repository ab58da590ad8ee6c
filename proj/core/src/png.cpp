#include "octevo/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "octevo/errors.hpp"

namespace octevo {

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type,
               const std::vector<std::uint8_t>& data) {
  put_be32(out, std::uint32_t(data.size()));
  const size_t tagged = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const std::uint32_t crc = std::uint32_t(
      ::crc32(0L, out.data() + tagged, uInt(4 + data.size())));
  put_be32(out, crc);
}

}  // namespace

std::vector<std::uint8_t> encode_gray_png(
    const std::vector<std::uint8_t>& pixels, int64_t h, int64_t w) {
  check_arg(h > 0 && w > 0, "png: empty image");
  check_dim(int64_t(pixels.size()) == h * w, "png: pixel count mismatch");

  std::vector<std::uint8_t> raw;
  raw.reserve(size_t(h) * size_t(w + 1));
  for (int64_t y = 0; y < h; ++y) {
    raw.push_back(0);  // per-scanline filter: none
    raw.insert(raw.end(), pixels.begin() + y * w, pixels.begin() + (y + 1) * w);
  }

  uLongf zlen = ::compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (::compress2(z.data(), &zlen, raw.data(), uLong(raw.size()),
                  Z_BEST_SPEED) != Z_OK)
    throw IoError("png: deflate failed");
  z.resize(zlen);

  std::vector<std::uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, std::uint32_t(w));
  put_be32(ihdr, std::uint32_t(h));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // depth 8, grayscale, defaults
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

void write_gray_png(const std::string& path,
                    const std::vector<std::uint8_t>& pixels, int64_t h,
                    int64_t w) {
  const std::vector<std::uint8_t> bytes = encode_gray_png(pixels, h, w);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           std::streamsize(bytes.size()));
  if (!os) throw IoError("short write to " + path);
}

void write_tile_strip_png(const std::string& path,
                          const std::vector<std::vector<std::uint8_t>>& tiles,
                          int64_t h, int64_t w) {
  check_arg(!tiles.empty(), "png strip: no tiles");
  for (const auto& t : tiles)
    check_dim(int64_t(t.size()) == h * w, "png strip: tile size mismatch");
  const int64_t gutter = 2;
  const int64_t n = int64_t(tiles.size());
  const int64_t total_w = n * w + (n - 1) * gutter;
  std::vector<std::uint8_t> strip(size_t(h * total_w), 255);
  for (int64_t k = 0; k < n; ++k) {
    const int64_t x0 = k * (w + gutter);
    for (int64_t y = 0; y < h; ++y)
      std::memcpy(strip.data() + y * total_w + x0, tiles[k].data() + y * w,
                  size_t(w));
  }
  write_gray_png(path, strip, h, total_w);
}

}  // namespace octevo
