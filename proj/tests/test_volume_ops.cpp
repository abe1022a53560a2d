#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "volfuse/errors.hpp"
#include "volfuse/plots.hpp"
#include "volfuse/png_io.hpp"
#include "volfuse/volume_ops.hpp"
#include "support.hpp"

using namespace volfuse;
using volfuse::testing::scratch_dir;

namespace {

VolumeGrid coordinate_volume(Dims3 dims) {
  VolumeGrid v = make_volume(dims);
  for (int z = 0; z < dims.z; ++z) {
    for (int y = 0; y < dims.y; ++y) {
      for (int x = 0; x < dims.x; ++x) {
        v.at(x, y, z) = static_cast<float>(x + 10 * y + 100 * z);
      }
    }
  }
  return v;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

// Minimal independent PNG reader: signature, IHDR fields, concatenated IDAT
// payload inflated with zlib. Returns the filtered scanline stream.
struct DecodedPng {
  std::uint32_t width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
  std::vector<std::uint8_t> scanlines;  // height * (1 + width*3) bytes
};

DecodedPng decode_png(const std::vector<std::uint8_t>& bytes) {
  static const std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  REQUIRE(bytes.size() > 8);
  REQUIRE(std::memcmp(bytes.data(), kSig, 8) == 0);

  DecodedPng png;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = be32(&bytes[pos]);
    REQUIRE(pos + 12 + len <= bytes.size());
    const std::string type(reinterpret_cast<const char*>(&bytes[pos + 4]), 4);
    const std::uint8_t* data = &bytes[pos + 8];
    if (type == "IHDR") {
      REQUIRE(len == 13);
      png.width = be32(data);
      png.height = be32(data + 4);
      png.bit_depth = data[8];
      png.color_type = data[9];
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  REQUIRE(png.width > 0);
  REQUIRE_FALSE(idat.empty());

  const uLongf expect = static_cast<uLongf>(png.height) * (1 + png.width * 3);
  png.scanlines.resize(expect);
  uLongf got = expect;
  const int rc = uncompress(png.scanlines.data(), &got, idat.data(),
                            static_cast<uLong>(idat.size()));
  REQUIRE(rc == Z_OK);
  REQUIRE(got == expect);
  return png;
}

}  // namespace

TEST_CASE("plane names map to the fixed axis convention") {
  CHECK(axis_from_plane_name("sagittal") == 0);
  CHECK(axis_from_plane_name("coronal") == 1);
  CHECK(axis_from_plane_name("axial") == 2);
  for (int axis = 0; axis < 3; ++axis) {
    CHECK(axis_from_plane_name(plane_name_from_axis(axis)) == axis);
  }
  CHECK_THROWS_AS(axis_from_plane_name("oblique"), ConfigError);
  CHECK_THROWS_AS(plane_name_from_axis(3), ConfigError);
}

TEST_CASE("central slice bands sit on the mid-plane") {
  const Dims3 dims{6, 9, 10};
  CHECK(central_slice_indices(dims, 2, 4) == std::vector<int>{3, 4, 5, 6});
  CHECK(central_slice_indices(dims, 1, 1) == std::vector<int>{4});
  CHECK(central_slice_indices(dims, 0, 6) == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(central_slice_indices(dims, 0, 99) == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK_THROWS_AS(central_slice_indices(dims, 2, 0), ConfigError);
  CHECK_THROWS_AS(central_slice_indices(dims, 5, 2), ConfigError);
}

TEST_CASE("slices read the expected rows and columns for every plane") {
  const VolumeGrid v = coordinate_volume({4, 3, 2});

  SUBCASE("axial fixes z; rows run along y") {
    const SliceImage s = extract_slice(v, 2, 1);
    REQUIRE(s.width == 4);
    REQUIRE(s.height == 3);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        CHECK(s.at(r, c) == static_cast<float>(c + 10 * r + 100));
      }
    }
  }
  SUBCASE("coronal fixes y; rows run along z") {
    const SliceImage s = extract_slice(v, 1, 2);
    REQUIRE(s.width == 4);
    REQUIRE(s.height == 2);
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 4; ++c) {
        CHECK(s.at(r, c) == static_cast<float>(c + 20 + 100 * r));
      }
    }
  }
  SUBCASE("sagittal fixes x; columns run along y") {
    const SliceImage s = extract_slice(v, 0, 3);
    REQUIRE(s.width == 3);
    REQUIRE(s.height == 2);
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 3; ++c) {
        CHECK(s.at(r, c) == static_cast<float>(3 + 10 * c + 100 * r));
      }
    }
  }
  SUBCASE("out-of-range indices are shape errors") {
    CHECK_THROWS_AS(extract_slice(v, 2, 2), ShapeError);
    CHECK_THROWS_AS(extract_slice(v, 0, -1), ShapeError);
  }
}

TEST_CASE("a slice becomes a singleton-Z model input") {
  const VolumeGrid v = coordinate_volume({4, 3, 2});
  const SliceImage s = extract_slice(v, 2, 0);
  const Tensor<float> t = slice_to_tensor(s);
  REQUIRE(t.shape == std::vector<std::size_t>{1, 1, 3, 4});
  for (std::size_t i = 0; i < s.pixels.size(); ++i) CHECK(t.data[i] == s.pixels[i]);
}

TEST_CASE("trilinear resampling preserves identity, constants, and ramps") {
  SUBCASE("same target dims reproduce the input") {
    const VolumeGrid v = coordinate_volume({5, 4, 3});
    const VolumeGrid out = trilinear_resample(v, v.dims);
    REQUIRE(out.dims == v.dims);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
      CHECK(out.voxels[i] == doctest::Approx(v.voxels[i]).epsilon(1e-6));
    }
  }
  SUBCASE("a constant field upsamples to the same constant") {
    const VolumeGrid v = make_volume({4, 4, 4}, {1, 1, 1}, 3.5f);
    const VolumeGrid out = trilinear_resample(v, {9, 9, 9});
    for (float x : out.voxels) CHECK(x == doctest::Approx(3.5f).epsilon(1e-6));
  }
  SUBCASE("the output spacing preserves physical extent") {
    VolumeGrid v = make_volume({4, 4, 4});
    v.spacing = {2.0, 3.0, 4.0};
    const VolumeGrid out = trilinear_resample(v, {8, 8, 8});
    CHECK(out.spacing[0] == doctest::Approx(1.0));
    CHECK(out.spacing[1] == doctest::Approx(1.5));
    CHECK(out.spacing[2] == doctest::Approx(2.0));
  }
  SUBCASE("a linear ramp interpolates exactly, clamped at the edges") {
    VolumeGrid v = make_volume({5, 1, 1});
    for (int x = 0; x < 5; ++x) v.at(x, 0, 0) = static_cast<float>(x);
    const VolumeGrid out = trilinear_resample(v, {9, 1, 1});
    for (int x = 0; x < 9; ++x) {
      const double src = (x + 0.5) * 5.0 / 9.0 - 0.5;
      const double expect = std::min(std::max(src, 0.0), 4.0);
      CHECK(out.at(x, 0, 0) == doctest::Approx(expect).epsilon(1e-6));
    }
  }
  SUBCASE("an upsampled spike stays at the scaled location") {
    VolumeGrid v = make_volume({6, 6, 6});
    v.at(2, 3, 1) = 1.0f;
    const VolumeGrid out = trilinear_resample(v, {12, 12, 12});
    int bx = 0, by = 0, bz = 0;
    float best = -1.0f;
    for (int z = 0; z < 12; ++z) {
      for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) {
          if (out.at(x, y, z) > best) {
            best = out.at(x, y, z);
            bx = x;
            by = y;
            bz = z;
          }
        }
      }
    }
    CHECK(best > 0.0f);
    CHECK(std::abs(bx / 2 - 2) <= 1);
    CHECK(std::abs(by / 2 - 3) <= 1);
    CHECK(std::abs(bz / 2 - 1) <= 1);
  }
  SUBCASE("a zero-voxel target is rejected") {
    const VolumeGrid v = make_volume({4, 4, 4});
    CHECK_THROWS_AS(trilinear_resample(v, {0, 4, 4}), ShapeError);
  }
}

TEST_CASE("written PNGs decode back to the original pixels") {
  const auto dir = scratch_dir("png");
  RgbImage img(7, 5);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 7; ++c) {
      img.set(r, c, static_cast<std::uint8_t>(r * 40), static_cast<std::uint8_t>(c * 30),
              static_cast<std::uint8_t>(r * c));
    }
  }
  const auto file = dir / "img.png";
  write_png(file, img);

  const auto bytes = read_bytes(file);
  const DecodedPng png = decode_png(bytes);
  CHECK(png.width == 7);
  CHECK(png.height == 5);
  CHECK(png.bit_depth == 8);
  CHECK(png.color_type == 2);  // truecolor RGB

  const std::size_t stride = 1 + 7 * 3;
  for (int r = 0; r < 5; ++r) {
    CHECK(png.scanlines[r * stride] == 0);  // filter byte: none
    CHECK(std::memcmp(&png.scanlines[r * stride + 1], &img.pixels[r * 7 * 3], 7 * 3) == 0);
  }

  // Writing the same image again produces identical bytes.
  const auto file2 = dir / "img2.png";
  write_png(file2, img);
  CHECK(read_bytes(file2) == bytes);

  RgbImage bad;
  CHECK_THROWS_AS(write_png(dir / "bad.png", bad), ShapeError);
  RgbImage mismatched(4, 4);
  mismatched.pixels.pop_back();
  CHECK_THROWS_AS(write_png(dir / "bad2.png", mismatched), ShapeError);
}

TEST_CASE("run-artifact charts render deterministically") {
  const auto dir = scratch_dir("plots");
  const std::vector<double> train = {1.2, 0.9, 0.7, 0.65, 0.6};
  const std::vector<double> val = {1.3, 1.0, 0.8, 0.85, 0.9};

  write_loss_curves_png(dir / "curves.png", train, val, 3);
  const auto a = read_bytes(dir / "curves.png");
  const DecodedPng png = decode_png(a);
  CHECK(png.width > 0);
  CHECK(png.height > 0);
  write_loss_curves_png(dir / "curves2.png", train, val, 3);
  CHECK(read_bytes(dir / "curves2.png") == a);

  write_fold_accuracy_png(dir / "acc.png", {76.6, 72.3, 63.8, 76.6, 72.3});
  const auto acc_bytes = read_bytes(dir / "acc.png");
  decode_png(acc_bytes);  // structurally valid
  write_fold_accuracy_png(dir / "acc2.png", {76.6, 72.3, 63.8, 76.6, 72.3});
  CHECK(read_bytes(dir / "acc2.png") == acc_bytes);

  CHECK_THROWS_AS(write_loss_curves_png(dir / "x.png", {}, {}, 1), ShapeError);
  CHECK_THROWS_AS(write_loss_curves_png(dir / "x.png", {1.0, 0.5}, {1.0}, 1), ShapeError);
  CHECK_THROWS_AS(write_fold_accuracy_png(dir / "x.png", {}), ShapeError);
}
