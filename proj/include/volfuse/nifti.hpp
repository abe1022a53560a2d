#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "volfuse/core_types.hpp"

namespace volfuse {

enum class NiftiDatatype : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kFloat32 = 16,
  kFloat64 = 64,
};

struct NiftiHeaderInfo {
  Dims3 dims;
  NiftiDatatype datatype = NiftiDatatype::kFloat32;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  bool big_endian = false;
  std::array<double, 3> spacing = {1.0, 1.0, 1.0};
  std::int64_t data_offset = 352;
};

// Parses a NIfTI-1 single-file header (.nii, optionally gzip-compressed).
// Endianness is detected via the sizeof_hdr field. Throws ParseError naming
// the offending field on bad magic / unsupported datatype / bad dims.
NiftiHeaderInfo read_nifti_header(const std::filesystem::path& file);

// Reads the full volume; stored values are converted to real values as
// stored * scl_slope + scl_inter, with slope 0 treated as 1.
VolumeGrid read_nifti_volume(const std::filesystem::path& file);

// Writes a float32 little-endian single-file volume; gzip-compressed when the
// filename ends in .gz. Reading it back is bit-identical for float32 data.
void write_nifti_volume(const std::filesystem::path& file, const VolumeGrid& grid);

}  // namespace volfuse
