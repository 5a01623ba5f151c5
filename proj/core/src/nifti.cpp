#include "dfm/nifti.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace dfm {
namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

enum Datatype : std::int16_t {
  kDtUInt8 = 2,
  kDtInt16 = 4,
  kDtInt32 = 8,
  kDtFloat32 = 16,
  kDtFloat64 = 64,
  kDtInt8 = 256,
  kDtUInt16 = 512,
  kDtUInt32 = 768,
};

struct GzCloser {
  void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

std::vector<unsigned char> slurp(const std::string& path) {
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open NIfTI file " + path);
  std::vector<unsigned char> buf;
  unsigned char chunk[1 << 16];
  while (true) {
    const int n = gzread(f.get(), chunk, sizeof(chunk));
    if (n < 0) throw std::runtime_error("corrupt compressed data in " + path);
    if (n == 0) break;
    buf.insert(buf.end(), chunk, chunk + n);
  }
  return buf;
}

// Reads a fixed-width field with optional byte swap.
template <typename T>
T get(const unsigned char* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if (swap) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  }
  return v;
}

template <typename T>
void put(unsigned char* p, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  }
  std::memcpy(p, &v, sizeof(T));
}

template <typename T>
void decode(const unsigned char* src, std::size_t n, bool swap, double slope, double inter,
            std::vector<double>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<double>(get<T>(src + i * sizeof(T), swap)) * slope + inter;
  }
}

}  // namespace

NiftiVolume read_nifti(const std::string& path) {
  const std::vector<unsigned char> buf = slurp(path);
  if (buf.size() < kHeaderSize) throw std::runtime_error(path + ": file too small for NIfTI");
  const unsigned char* h = buf.data();
  bool swap = false;
  if (get<std::int32_t>(h, false) != kHeaderSize) {
    if (get<std::int32_t>(h, true) != kHeaderSize) {
      throw std::runtime_error(path + ": not a NIfTI-1 file");
    }
    swap = true;
  }
  if (std::memcmp(h + 344, "n+1", 3) != 0 && std::memcmp(h + 344, "ni1", 3) != 0) {
    throw std::runtime_error(path + ": bad NIfTI magic");
  }
  if (std::memcmp(h + 344, "ni1", 3) == 0) {
    throw std::runtime_error(path + ": two-file (.hdr/.img) NIfTI is not supported");
  }

  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = get<std::int16_t>(h + 40 + 2 * i, swap);
  if (dim[0] < 1 || dim[0] > 7) throw std::runtime_error(path + ": bad dim[0]");
  for (int i = 4; i <= dim[0]; ++i) {
    if (dim[i] > 1) throw std::runtime_error(path + ": only 2D/3D volumes are supported");
  }
  NiftiVolume vol;
  vol.width = dim[1];
  vol.height = dim[0] >= 2 ? dim[2] : 1;
  vol.depth = dim[0] >= 3 ? dim[3] : 1;
  if (vol.width < 1 || vol.height < 1 || vol.depth < 1) {
    throw std::runtime_error(path + ": non-positive dimension");
  }
  float pixdim[8];
  for (int i = 0; i < 8; ++i) pixdim[i] = get<float>(h + 76 + 4 * i, swap);
  auto spacing_of = [&](int axis) {
    const double s = std::fabs(static_cast<double>(pixdim[axis]));
    return s > 0.0 && std::isfinite(s) ? s : 1.0;
  };
  vol.spacing = {spacing_of(3), spacing_of(2), spacing_of(1)};

  const auto datatype = get<std::int16_t>(h + 70, swap);
  const float vox_offset = get<float>(h + 108, swap);
  double slope = get<float>(h + 112, swap);
  double inter = get<float>(h + 116, swap);
  if (slope == 0.0 || !std::isfinite(slope)) {
    slope = 1.0;
    inter = 0.0;
  }
  if (!std::isfinite(inter)) inter = 0.0;

  const std::size_t n = static_cast<std::size_t>(vol.width) * vol.height * vol.depth;
  std::size_t elem = 0;
  switch (datatype) {
    case kDtUInt8: case kDtInt8: elem = 1; break;
    case kDtInt16: case kDtUInt16: elem = 2; break;
    case kDtInt32: case kDtUInt32: case kDtFloat32: elem = 4; break;
    case kDtFloat64: elem = 8; break;
    default:
      throw std::runtime_error(path + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }
  const auto offset = static_cast<std::size_t>(vox_offset < kVoxOffset ? kVoxOffset : vox_offset);
  if (buf.size() < offset + n * elem) throw std::runtime_error(path + ": truncated voxel data");
  const unsigned char* src = buf.data() + offset;
  switch (datatype) {
    case kDtUInt8: decode<std::uint8_t>(src, n, swap, slope, inter, vol.values); break;
    case kDtInt8: decode<std::int8_t>(src, n, swap, slope, inter, vol.values); break;
    case kDtInt16: decode<std::int16_t>(src, n, swap, slope, inter, vol.values); break;
    case kDtUInt16: decode<std::uint16_t>(src, n, swap, slope, inter, vol.values); break;
    case kDtInt32: decode<std::int32_t>(src, n, swap, slope, inter, vol.values); break;
    case kDtUInt32: decode<std::uint32_t>(src, n, swap, slope, inter, vol.values); break;
    case kDtFloat32: decode<float>(src, n, swap, slope, inter, vol.values); break;
    case kDtFloat64: decode<double>(src, n, swap, slope, inter, vol.values); break;
    default: break;
  }
  return vol;
}

void write_nifti(const std::string& path, const NiftiVolume& volume, NiftiType type) {
  const std::size_t n = static_cast<std::size_t>(volume.width) * volume.height * volume.depth;
  if (volume.values.size() != n) throw std::invalid_argument("NIfTI value count mismatch");

  std::int16_t datatype = kDtFloat32;
  std::int16_t bitpix = 32;
  switch (type) {
    case NiftiType::kUInt8: datatype = kDtUInt8; bitpix = 8; break;
    case NiftiType::kInt16: datatype = kDtInt16; bitpix = 16; break;
    case NiftiType::kInt32: datatype = kDtInt32; bitpix = 32; break;
    case NiftiType::kFloat32: datatype = kDtFloat32; bitpix = 32; break;
  }
  const std::size_t elem = static_cast<std::size_t>(bitpix) / 8;
  std::vector<unsigned char> buf(kVoxOffset + n * elem, 0);
  unsigned char* h = buf.data();
  put<std::int32_t>(h, kHeaderSize);
  h[38] = 'r';
  put<std::int16_t>(h + 40, 3);
  put<std::int16_t>(h + 42, static_cast<std::int16_t>(volume.width));
  put<std::int16_t>(h + 44, static_cast<std::int16_t>(volume.height));
  put<std::int16_t>(h + 46, static_cast<std::int16_t>(volume.depth));
  for (int i = 4; i < 8; ++i) put<std::int16_t>(h + 40 + 2 * i, 1);
  put<std::int16_t>(h + 70, datatype);
  put<std::int16_t>(h + 72, bitpix);
  put<float>(h + 76, 1.0f);
  put<float>(h + 80, static_cast<float>(volume.spacing[2]));
  put<float>(h + 84, static_cast<float>(volume.spacing[1]));
  put<float>(h + 88, static_cast<float>(volume.spacing[0]));
  put<float>(h + 108, static_cast<float>(kVoxOffset));
  put<float>(h + 112, 1.0f);
  put<float>(h + 116, 0.0f);
  h[123] = 2;  // millimetres
  std::memcpy(h + 344, "n+1\0", 4);

  unsigned char* dst = buf.data() + kVoxOffset;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = volume.values[i];
    switch (type) {
      case NiftiType::kUInt8: dst[i] = static_cast<std::uint8_t>(std::lround(v)); break;
      case NiftiType::kInt16:
        put<std::int16_t>(dst + 2 * i, static_cast<std::int16_t>(std::lround(v)));
        break;
      case NiftiType::kInt32:
        put<std::int32_t>(dst + 4 * i, static_cast<std::int32_t>(std::lround(v)));
        break;
      case NiftiType::kFloat32: put<float>(dst + 4 * i, static_cast<float>(v)); break;
    }
  }

  const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  GzHandle f(gzopen(path.c_str(), gz ? "wb6" : "wbT"));
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  if (gzwrite(f.get(), buf.data(), static_cast<unsigned>(buf.size())) !=
      static_cast<int>(buf.size())) {
    throw std::runtime_error("failed writing " + path);
  }
}

}  // namespace dfm
