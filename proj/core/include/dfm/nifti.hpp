#ifndef DFM_NIFTI_HPP_
#define DFM_NIFTI_HPP_

#include <array>
#include <string>
#include <vector>

namespace dfm {

/// A NIfTI-1 volume reduced to what segmentation needs: up to three spatial
/// dimensions, voxel spacing, and the values scaled by scl_slope/scl_inter.
///
/// Storage is x-fastest, which is row-major D×H×W with D = dim[3],
/// H = dim[2], W = dim[1].
struct NiftiVolume {
  int depth = 1;   // dim[3]
  int height = 1;  // dim[2]
  int width = 1;   // dim[1]
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // (sz, sy, sx) in mm
  std::vector<double> values;
};

/// Reads .nii or .nii.gz (gzip detected from content). Supports the
/// integer and float datatypes; 4D files are rejected unless dim[4] == 1.
NiftiVolume read_nifti(const std::string& path);

enum class NiftiType { kUInt8, kInt16, kInt32, kFloat32 };

/// Writes a single-file NIfTI-1 volume; gzip-compressed when the path ends
/// in ".gz".
void write_nifti(const std::string& path, const NiftiVolume& volume, NiftiType type);

}  // namespace dfm

#endif  // DFM_NIFTI_HPP_
