#include "volfuse/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "volfuse/errors.hpp"

namespace volfuse {
namespace {

void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

// length / type / data / CRC32(type+data), lengths and CRC big-endian.
void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
  append_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  append_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png(const std::filesystem::path& file, const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0) {
    throw ShapeError("PNG image must have positive dimensions");
  }
  const std::size_t expected = static_cast<std::size_t>(image.width) * image.height * 3;
  if (image.pixels.size() != expected) {
    throw ShapeError("PNG pixel buffer size does not match width*height*3");
  }

  // Raw stream: each scanline prefixed with filter byte 0 (None).
  const std::size_t stride = static_cast<std::size_t>(image.width) * 3;
  std::vector<std::uint8_t> raw((stride + 1) * image.height);
  for (int row = 0; row < image.height; ++row) {
    std::uint8_t* dst = raw.data() + static_cast<std::size_t>(row) * (stride + 1);
    *dst = 0;
    std::memcpy(dst + 1, image.pixels.data() + static_cast<std::size_t>(row) * stride, stride);
  }

  uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(compressed_size);
  if (compress2(compressed.data(), &compressed_size, raw.data(),
                static_cast<uLong>(raw.size()), Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw Error("zlib compression failed while writing PNG");
  }
  compressed.resize(compressed_size);

  static const std::uint8_t signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> out(signature, signature + 8);

  std::vector<std::uint8_t> ihdr;
  append_be32(ihdr, static_cast<std::uint32_t>(image.width));
  append_be32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", compressed);
  append_chunk(out, "IEND", {});

  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + file.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("short write while saving '" + file.string() + "'");
}

}  // namespace volfuse
