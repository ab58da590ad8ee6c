#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "octevo/errors.hpp"
#include "octevo/png.hpp"

using namespace octevo;
using Bytes = std::vector<std::uint8_t>;

namespace {

std::uint32_t be32(const Bytes& b, size_t off) {
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

struct Chunk {
  std::string type;
  Bytes data;
  std::uint32_t crc;
};

// independent chunk walk; validates every CRC with zlib directly
std::vector<Chunk> parse_chunks(const Bytes& png) {
  const Bytes sig = {137, 80, 78, 71, 13, 10, 26, 10};
  REQUIRE(png.size() > sig.size());
  for (size_t i = 0; i < sig.size(); ++i) REQUIRE(png[i] == sig[i]);
  std::vector<Chunk> out;
  size_t pos = sig.size();
  while (pos < png.size()) {
    REQUIRE(pos + 12 <= png.size());
    const std::uint32_t len = be32(png, pos);
    REQUIRE(pos + 12 + len <= png.size());
    Chunk c;
    c.type.assign(png.begin() + pos + 4, png.begin() + pos + 8);
    c.data.assign(png.begin() + pos + 8, png.begin() + pos + 8 + len);
    c.crc = be32(png, pos + 8 + len);
    const std::uint32_t want = std::uint32_t(
        ::crc32(0L, png.data() + pos + 4, uInt(4 + len)));
    CHECK(c.crc == want);
    out.push_back(std::move(c));
    pos += 12 + len;
  }
  return out;
}

// inflate the concatenated IDAT payload and strip the filter bytes
Bytes decode_pixels(const std::vector<Chunk>& chunks, int64_t h, int64_t w) {
  Bytes z;
  for (const auto& c : chunks)
    if (c.type == "IDAT") z.insert(z.end(), c.data.begin(), c.data.end());
  Bytes raw(size_t(h * (w + 1)));
  uLongf rawlen = uLongf(raw.size());
  REQUIRE(::uncompress(raw.data(), &rawlen, z.data(), uLong(z.size())) ==
          Z_OK);
  REQUIRE(int64_t(rawlen) == h * (w + 1));
  Bytes px;
  for (int64_t y = 0; y < h; ++y) {
    CHECK(raw[size_t(y * (w + 1))] == 0);  // filter byte
    px.insert(px.end(), raw.begin() + y * (w + 1) + 1,
              raw.begin() + (y + 1) * (w + 1));
  }
  return px;
}

}  // namespace

TEST_CASE("png encoder round trips through an independent inflate") {
  const int64_t h = 3, w = 5;
  Bytes pix(15);
  for (size_t i = 0; i < pix.size(); ++i) pix[i] = std::uint8_t(17 * i);

  const Bytes png = encode_gray_png(pix, h, w);
  auto chunks = parse_chunks(png);
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].type == "IHDR");
  CHECK(chunks[1].type == "IDAT");
  CHECK(chunks[2].type == "IEND");
  REQUIRE(chunks[0].data.size() == 13);
  CHECK(be32(chunks[0].data, 0) == 5);       // width
  CHECK(be32(chunks[0].data, 4) == 3);       // height
  CHECK(chunks[0].data[8] == 8);             // bit depth
  CHECK(chunks[0].data[9] == 0);             // grayscale
  CHECK(chunks[0].data[10] == 0);
  CHECK(chunks[0].data[11] == 0);
  CHECK(chunks[0].data[12] == 0);            // no interlace
  CHECK(chunks[2].data.empty());
  CHECK(decode_pixels(chunks, h, w) == pix);
}

TEST_CASE("png writer emits the encoder bytes to disk") {
  Bytes pix(8 * 4);
  for (size_t i = 0; i < pix.size(); ++i) pix[i] = std::uint8_t(255 - 3 * i);
  const std::string path = "roundtrip_gray.png";
  write_gray_png(path, pix, 4, 8);
  std::ifstream is(path, std::ios::binary);
  REQUIRE(bool(is));
  Bytes back((std::istreambuf_iterator<char>(is)),
             std::istreambuf_iterator<char>());
  CHECK(back == encode_gray_png(pix, 4, 8));
  std::remove(path.c_str());
}

TEST_CASE("png tile strip layout") {
  const int64_t h = 2, w = 3;
  Bytes a(6, 10), b(6, 200), c(6, 90);
  const std::string path = "strip.png";
  write_tile_strip_png(path, {a, b, c}, h, w);
  std::ifstream is(path, std::ios::binary);
  REQUIRE(bool(is));
  Bytes png((std::istreambuf_iterator<char>(is)),
            std::istreambuf_iterator<char>());
  std::remove(path.c_str());

  auto chunks = parse_chunks(png);
  const int64_t W = 3 * w + 2 * 2;
  CHECK(be32(chunks[0].data, 0) == std::uint32_t(W));
  CHECK(be32(chunks[0].data, 4) == std::uint32_t(h));
  Bytes px = decode_pixels(chunks, h, W);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      const std::uint8_t v = px[size_t(y * W + x)];
      if (x < 3)
        CHECK(v == 10);
      else if (x < 5)
        CHECK(v == 255);  // gutter
      else if (x < 8)
        CHECK(v == 200);
      else if (x < 10)
        CHECK(v == 255);
      else
        CHECK(v == 90);
    }
  }
}

TEST_CASE("png input validation") {
  CHECK_THROWS_AS(encode_gray_png({1, 2, 3}, 2, 2), DimensionError);
  CHECK_THROWS_AS(encode_gray_png({}, 0, 0), ParameterError);
  CHECK_THROWS_AS(write_tile_strip_png("x.png", {}, 2, 2), ParameterError);
  CHECK_THROWS_AS(write_tile_strip_png("x.png", {{1, 2}}, 2, 2),
                  DimensionError);
}
