#include <doctest.h>

#include <cstring>
#include <fstream>

#include "volfuse/errors.hpp"
#include "volfuse/nifti.hpp"
#include "volfuse/rng.hpp"
#include "support.hpp"

using namespace volfuse;
namespace fs = std::filesystem;

namespace {

// Minimal hand-rolled NIfTI-1 header for crafting malformed/edge-case files.
struct RawHeader {
  std::vector<char> bytes = std::vector<char>(352, 0);

  RawHeader(Dims3 dims, std::int16_t datatype, std::int16_t bitpix) {
    put_i32(0, 348);
    put_i16(40, 3);  // dim[0]
    put_i16(42, static_cast<std::int16_t>(dims.x));
    put_i16(44, static_cast<std::int16_t>(dims.y));
    put_i16(46, static_cast<std::int16_t>(dims.z));
    put_i16(70, datatype);
    put_i16(72, bitpix);
    put_f32(80, 1.0f);   // pixdim[1..3]
    put_f32(84, 1.0f);
    put_f32(88, 1.0f);
    put_f32(108, 352.0f);  // vox_offset
    put_f32(112, 1.0f);    // scl_slope
    put_f32(116, 0.0f);    // scl_inter
    bytes[344] = 'n';
    bytes[345] = '+';
    bytes[346] = '1';
    bytes[347] = '\0';
  }

  void put_i32(int off, std::int32_t v) { std::memcpy(&bytes[off], &v, 4); }
  void put_i16(int off, std::int16_t v) { std::memcpy(&bytes[off], &v, 2); }
  void put_f32(int off, float v) { std::memcpy(&bytes[off], &v, 4); }

  void write(const fs::path& file, const std::vector<char>& payload) const {
    std::ofstream out(file, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
};

VolumeGrid random_volume(Dims3 dims, std::uint64_t seed) {
  VolumeGrid g = make_volume(dims, {1.0, 1.25, 1.5});
  Rng rng(seed);
  for (float& v : g.voxels) v = static_cast<float>(rng.uniform(-10.0, 10.0));
  return g;
}

}  // namespace

TEST_CASE("float32 volumes round-trip bit for bit") {
  const fs::path dir = volfuse::testing::scratch_dir("nifti_roundtrip");
  const VolumeGrid g = random_volume({7, 5, 3}, 11);

  for (const char* name : {"plain.nii", "packed.nii.gz"}) {
    const fs::path file = dir / name;
    write_nifti_volume(file, g);
    const VolumeGrid back = read_nifti_volume(file);
    CHECK(back.dims == g.dims);
    CHECK(back.spacing == g.spacing);
    REQUIRE(back.voxels.size() == g.voxels.size());
    CHECK(std::memcmp(back.voxels.data(), g.voxels.data(),
                      g.voxels.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("the header reports standard-grid geometry") {
  const fs::path dir = volfuse::testing::scratch_dir("nifti_header");
  const fs::path file = dir / "grid.nii";
  RawHeader h({91, 109, 91}, 16, 32);
  h.write(file, std::vector<char>(91 * 109 * 91 * 4, 0));

  const NiftiHeaderInfo info = read_nifti_header(file);
  CHECK(info.dims == Dims3{91, 109, 91});
  CHECK(info.datatype == NiftiDatatype::kFloat32);
  const VolumeGrid g = read_nifti_volume(file);
  CHECK(g.voxels.size() == 902629);
}

TEST_CASE("scl_slope zero means identity scaling") {
  const fs::path dir = volfuse::testing::scratch_dir("nifti_slope");
  const fs::path file = dir / "int16.nii";
  RawHeader h({2, 2, 2}, 4, 16);  // int16
  h.put_f32(112, 0.0f);           // scl_slope = 0
  h.put_f32(116, 0.0f);
  std::vector<char> payload(8 * 2);
  for (int i = 0; i < 8; ++i) {
    const std::int16_t v = 7;
    std::memcpy(&payload[i * 2], &v, 2);
  }
  h.write(file, payload);

  const VolumeGrid g = read_nifti_volume(file);
  for (float v : g.voxels) CHECK(v == 7.0f);
}

TEST_CASE("slope and intercept apply to stored values") {
  const fs::path dir = volfuse::testing::scratch_dir("nifti_scaling");
  const fs::path file = dir / "scaled.nii";
  RawHeader h({2, 1, 1}, 4, 16);
  h.put_f32(112, 2.0f);
  h.put_f32(116, -1.0f);
  std::vector<char> payload(4);
  const std::int16_t vals[2] = {3, -4};
  std::memcpy(payload.data(), vals, 4);
  h.write(file, payload);

  const VolumeGrid g = read_nifti_volume(file);
  CHECK(g.voxels[0] == doctest::Approx(5.0f));   // 3*2 - 1
  CHECK(g.voxels[1] == doctest::Approx(-9.0f));  // -4*2 - 1
}

TEST_CASE("big-endian files are detected via sizeof_hdr") {
  const fs::path dir = volfuse::testing::scratch_dir("nifti_endian");
  const fs::path file = dir / "big.nii";
  RawHeader h({2, 1, 1}, 4, 16);
  // Byte-swap every multi-byte field the reader consumes.
  auto swap32 = [&](int off) { std::swap(h.bytes[off], h.bytes[off + 3]); std::swap(h.bytes[off + 1], h.bytes[off + 2]); };
  auto swap16 = [&](int off) { std::swap(h.bytes[off], h.bytes[off + 1]); };
  swap32(0);
  for (int off : {40, 42, 44, 46, 70, 72}) swap16(off);
  for (int off : {80, 84, 88, 108, 112, 116}) swap32(off);
  std::vector<char> payload = {0x01, 0x02, 0x00, 0x07};  // big-endian 258, 7
  h.write(file, payload);

  const NiftiHeaderInfo info = read_nifti_header(file);
  CHECK(info.big_endian);
  const VolumeGrid g = read_nifti_volume(file);
  CHECK(g.voxels[0] == 258.0f);
  CHECK(g.voxels[1] == 7.0f);
}

TEST_CASE("malformed files raise parse errors naming the problem") {
  const fs::path dir = volfuse::testing::scratch_dir("nifti_bad");

  SUBCASE("bad magic") {
    const fs::path file = dir / "magic.nii";
    RawHeader h({2, 2, 2}, 16, 32);
    h.bytes[344] = 'x';
    h.write(file, std::vector<char>(32, 0));
    CHECK_THROWS_WITH_AS(read_nifti_header(file),
                         doctest::Contains("magic"), ParseError);
  }
  SUBCASE("unsupported datatype") {
    const fs::path file = dir / "dtype.nii";
    RawHeader h({2, 2, 2}, 128, 24);  // RGB24, unsupported
    h.write(file, std::vector<char>(24, 0));
    CHECK_THROWS_WITH_AS(read_nifti_header(file),
                         doctest::Contains("datatype"), ParseError);
  }
  SUBCASE("truncated payload") {
    const fs::path file = dir / "short.nii";
    RawHeader h({4, 4, 4}, 16, 32);
    h.write(file, std::vector<char>(10, 0));  // needs 256 bytes
    CHECK_THROWS_AS(read_nifti_volume(file), ParseError);
  }
  SUBCASE("nonpositive dims") {
    const fs::path file = dir / "dims.nii";
    RawHeader h({0, 4, 4}, 16, 32);
    h.write(file, {});
    CHECK_THROWS_WITH_AS(read_nifti_header(file), doctest::Contains("dim"),
                         ParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_nifti_header(dir / "absent.nii"), ParseError);
  }
}
