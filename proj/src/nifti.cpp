#include "volfuse/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace volfuse {
namespace {

constexpr std::size_t kHeaderSize = 348;

static_assert(std::endian::native == std::endian::little,
              "reader assumes a little-endian host");

bool is_gzip(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + file.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in,
                                 const std::string& name) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw Error("inflateInit2 failed");
  std::vector<std::uint8_t> out;
  out.resize(std::max<std::size_t>(in.size() * 4, 1 << 16));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::size_t written = 0;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    if (written == out.size()) out.resize(out.size() * 2);
    zs.next_out = out.data() + written;
    zs.avail_out = static_cast<uInt>(out.size() - written);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw ParseError("'" + name + "': corrupt gzip stream");
    }
    written = out.size() - zs.avail_out;
  }
  inflateEnd(&zs);
  out.resize(written);
  return out;
}

std::vector<std::uint8_t> gzip_compress(const std::vector<std::uint8_t>& in) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error("deflateInit2 failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())) + 32);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  if (deflate(&zs, Z_FINISH) != Z_STREAM_END) {
    deflateEnd(&zs);
    throw Error("gzip compression failed");
  }
  out.resize(out.size() - zs.avail_out);
  deflateEnd(&zs);
  return out;
}

template <typename T>
T read_raw(const std::uint8_t* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

int bytes_per_voxel(NiftiDatatype dt) {
  switch (dt) {
    case NiftiDatatype::kUint8: return 1;
    case NiftiDatatype::kInt16: return 2;
    case NiftiDatatype::kFloat32: return 4;
    case NiftiDatatype::kFloat64: return 8;
  }
  return 0;
}

NiftiHeaderInfo parse_header(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (bytes.size() < kHeaderSize) {
    throw ParseError("'" + name + "': file shorter than the 348-byte header");
  }
  const std::uint8_t* p = bytes.data();
  bool swap = false;
  std::int32_t sizeof_hdr = read_raw<std::int32_t>(p, false);
  if (sizeof_hdr != 348) {
    sizeof_hdr = read_raw<std::int32_t>(p, true);
    if (sizeof_hdr != 348) {
      throw ParseError("'" + name + "': sizeof_hdr is not 348 in either byte order");
    }
    swap = true;
  }
  const char* magic = reinterpret_cast<const char*>(p + 344);
  if (!(magic[0] == 'n' && magic[1] == '+' && magic[2] == '1' && magic[3] == '\0')) {
    throw ParseError("'" + name + "': bad magic (expected \"n+1\\0\" single-file NIfTI-1)");
  }

  NiftiHeaderInfo info;
  info.big_endian = swap;
  const std::int16_t ndim = read_raw<std::int16_t>(p + 40, swap);
  if (ndim < 1 || ndim > 7) {
    throw ParseError("'" + name + "': dim[0] = " + std::to_string(ndim) + " out of range");
  }
  std::array<std::int16_t, 7> dim{1, 1, 1, 1, 1, 1, 1};
  for (int i = 0; i < ndim; ++i) dim[i] = read_raw<std::int16_t>(p + 42 + 2 * i, swap);
  for (int i = 3; i < 7; ++i) {
    if (dim[i] > 1) {
      throw ParseError("'" + name + "': dim[" + std::to_string(i + 1) +
                       "] > 1 (4D/time-series volumes unsupported)");
    }
  }
  if (dim[0] <= 0 || dim[1] <= 0 || dim[2] <= 0) {
    throw ParseError("'" + name + "': non-positive spatial dim");
  }
  info.dims = Dims3{dim[0], dim[1], dim[2]};

  const std::int16_t dt = read_raw<std::int16_t>(p + 70, swap);
  switch (dt) {
    case 2: info.datatype = NiftiDatatype::kUint8; break;
    case 4: info.datatype = NiftiDatatype::kInt16; break;
    case 16: info.datatype = NiftiDatatype::kFloat32; break;
    case 64: info.datatype = NiftiDatatype::kFloat64; break;
    default:
      throw ParseError("'" + name + "': unsupported datatype code " + std::to_string(dt) +
                       " (supported: uint8, int16, float32, float64)");
  }

  for (int i = 0; i < 3; ++i) {
    const float s = read_raw<float>(p + 76 + 4 * (i + 1), swap);
    info.spacing[i] = s > 0.0f ? static_cast<double>(s) : 1.0;
  }
  info.scl_slope = read_raw<float>(p + 112, swap);
  info.scl_inter = read_raw<float>(p + 116, swap);
  const float vox_offset = read_raw<float>(p + 108, swap);
  info.data_offset = static_cast<std::int64_t>(vox_offset);
  if (info.data_offset < static_cast<std::int64_t>(kHeaderSize)) {
    throw ParseError("'" + name + "': vox_offset " + std::to_string(info.data_offset) +
                     " points inside the header");
  }
  return info;
}

}  // namespace

NiftiHeaderInfo read_nifti_header(const std::filesystem::path& file) {
  std::vector<std::uint8_t> bytes = read_file_bytes(file);
  if (is_gzip(bytes)) bytes = gunzip(bytes, file.string());
  return parse_header(bytes, file.string());
}

VolumeGrid read_nifti_volume(const std::filesystem::path& file) {
  std::vector<std::uint8_t> bytes = read_file_bytes(file);
  if (is_gzip(bytes)) bytes = gunzip(bytes, file.string());
  const NiftiHeaderInfo info = parse_header(bytes, file.string());

  const std::int64_t nvox = info.dims.count();
  const int bpv = bytes_per_voxel(info.datatype);
  if (info.data_offset + nvox * bpv > static_cast<std::int64_t>(bytes.size())) {
    throw ParseError("'" + file.string() + "': voxel buffer truncated (need " +
                     std::to_string(nvox * bpv) + " bytes at offset " +
                     std::to_string(info.data_offset) + ", file has " +
                     std::to_string(bytes.size()) + ")");
  }

  VolumeGrid grid;
  grid.dims = info.dims;
  grid.spacing = info.spacing;
  grid.voxels.resize(static_cast<std::size_t>(nvox));

  // slope 0 means unscaled data per the format; treat as 1.
  const float slope = info.scl_slope == 0.0f ? 1.0f : info.scl_slope;
  const float inter = info.scl_inter;
  const std::uint8_t* src = bytes.data() + info.data_offset;
  const bool swap = info.big_endian;

  for (std::int64_t i = 0; i < nvox; ++i) {
    float stored = 0.0f;
    switch (info.datatype) {
      case NiftiDatatype::kUint8:
        stored = static_cast<float>(src[i]);
        break;
      case NiftiDatatype::kInt16:
        stored = static_cast<float>(read_raw<std::int16_t>(src + 2 * i, swap));
        break;
      case NiftiDatatype::kFloat32:
        stored = read_raw<float>(src + 4 * i, swap);
        break;
      case NiftiDatatype::kFloat64:
        stored = static_cast<float>(read_raw<double>(src + 8 * i, swap));
        break;
    }
    grid.voxels[static_cast<std::size_t>(i)] = stored * slope + inter;
  }
  return grid;
}

void write_nifti_volume(const std::filesystem::path& file, const VolumeGrid& grid) {
  validate(grid);
  std::vector<std::uint8_t> out(352 + grid.voxels.size() * 4, 0);
  std::uint8_t* p = out.data();
  auto put_i32 = [&](std::size_t off, std::int32_t v) { std::memcpy(p + off, &v, 4); };
  auto put_i16 = [&](std::size_t off, std::int16_t v) { std::memcpy(p + off, &v, 2); };
  auto put_f32 = [&](std::size_t off, float v) { std::memcpy(p + off, &v, 4); };

  put_i32(0, 348);
  p[39] = 'r';  // regular
  put_i16(40, 3);
  put_i16(42, static_cast<std::int16_t>(grid.dims.x));
  put_i16(44, static_cast<std::int16_t>(grid.dims.y));
  put_i16(46, static_cast<std::int16_t>(grid.dims.z));
  for (int i = 3; i < 7; ++i) put_i16(40 + 2 * (i + 1), 1);
  put_i16(70, static_cast<std::int16_t>(NiftiDatatype::kFloat32));
  put_i16(72, 32);  // bitpix
  put_f32(76, 1.0f);
  for (int i = 0; i < 3; ++i) put_f32(76 + 4 * (i + 1), static_cast<float>(grid.spacing[i]));
  put_f32(108, 352.0f);  // vox_offset
  put_f32(112, 1.0f);    // scl_slope
  put_f32(116, 0.0f);    // scl_inter
  p[123] = 2;            // xyzt_units: mm
  p[344] = 'n';
  p[345] = '+';
  p[346] = '1';
  p[347] = '\0';
  // bytes 348..351 stay zero: no header extensions.
  std::memcpy(p + 352, grid.voxels.data(), grid.voxels.size() * 4);

  if (file.extension() == ".gz") out = gzip_compress(out);

  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + file.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw Error("short write to '" + file.string() + "'");
}

}  // namespace volfuse
