#include "zoneprior/nifti.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

namespace zoneprior {

static_assert(std::endian::native == std::endian::little, "NIfTI I/O assumes a little-endian host");

namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

// Byte offsets into the NIfTI-1 header.
namespace off {
constexpr int sizeof_hdr = 0;
constexpr int dim = 40;
constexpr int datatype = 70;
constexpr int bitpix = 72;
constexpr int pixdim = 76;
constexpr int vox_offset = 108;
constexpr int scl_slope = 112;
constexpr int xyzt_units = 123;
constexpr int descrip = 148;
constexpr int qform_code = 252;
constexpr int sform_code = 254;
constexpr int qoffset = 268;
constexpr int srow = 280;
constexpr int magic = 344;
}  // namespace off

template <typename T>
T get(const std::vector<char>& buf, int offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

template <typename T>
void put(std::vector<char>& buf, int offset, T v) {
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

bool is_gz(const std::filesystem::path& p) { return p.extension() == ".gz"; }

// Header floats hold decimal values such as 3.6 that are not exact in binary.
// Recover the shortest decimal that rounds to the stored float.
double widen(float f) {
  std::array<char, 32> text{};
  auto res = std::to_chars(text.data(), text.data() + text.size(), f);
  double d = 0.0;
  std::from_chars(text.data(), res.ptr, d);
  return d;
}

std::vector<char> slurp(const std::filesystem::path& path, std::size_t limit = SIZE_MAX) {
  std::vector<char> out;
  if (is_gz(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path.string());
    std::array<char, 1 << 16> chunk;
    while (out.size() < limit) {
      int n = gzread(f, chunk.data(), unsigned(chunk.size()));
      if (n < 0) {
        gzclose(f);
        throw FormatError("corrupt gzip stream in " + path.string());
      }
      if (n == 0) break;
      out.insert(out.end(), chunk.begin(), chunk.begin() + n);
    }
    gzclose(f);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = std::size_t(in.tellg());
    in.seekg(0);
    out.resize(std::min(size, limit));
    in.read(out.data(), std::streamsize(out.size()));
    if (!in) throw IoError("read failed for " + path.string());
  }
  return out;
}

int dtype_bytes(NiftiDtype t) {
  switch (t) {
    case NiftiDtype::kUint8: return 1;
    case NiftiDtype::kInt16: return 2;
    case NiftiDtype::kFloat32: return 4;
  }
  return 0;
}

NiftiInfo parse_header(const std::vector<char>& buf, const std::string& name) {
  if (buf.size() < std::size_t(kHeaderSize)) throw FormatError(name + ": truncated NIfTI header");
  const auto sz = get<std::int32_t>(buf, off::sizeof_hdr);
  if (sz != kHeaderSize) {
    if (std::int32_t(__builtin_bswap32(std::uint32_t(sz))) == kHeaderSize)
      throw FormatError(name + ": big-endian NIfTI is not supported");
    throw FormatError(name + ": not a NIfTI-1 file (sizeof_hdr=" + std::to_string(sz) + ")");
  }
  if (std::memcmp(buf.data() + off::magic, "n+1\0", 4) != 0)
    throw FormatError(name + ": expected single-file NIfTI magic \"n+1\"");

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[i] = get<std::int16_t>(buf, off::dim + 2 * i);
  if (dim[0] < 1 || dim[0] > 7) throw FormatError(name + ": invalid dim[0]");
  for (int i = 4; i <= dim[0]; ++i)
    if (dim[i] != 1) throw FormatError(name + ": only 3D volumes are supported");

  NiftiInfo info;
  info.geom.shape = {dim[1], dim[0] >= 2 ? dim[2] : 1, dim[0] >= 3 ? dim[3] : 1};
  for (int i = 0; i < 3; ++i) {
    info.geom.spacing(i) = widen(std::abs(get<float>(buf, off::pixdim + 4 * (i + 1))));
    info.geom.origin(i) = widen(get<float>(buf, off::qoffset + 4 * i));
  }

  const auto dt = get<std::int16_t>(buf, off::datatype);
  switch (dt) {
    case 2: info.dtype = NiftiDtype::kUint8; break;
    case 4: info.dtype = NiftiDtype::kInt16; break;
    case 16: info.dtype = NiftiDtype::kFloat32; break;
    default: throw FormatError(name + ": unsupported NIfTI datatype " + std::to_string(dt));
  }
  try {
    info.geom.validate();
  } catch (const ValidationError& e) {
    throw FormatError(name + ": " + e.what());
  }
  return info;
}

struct RawImage {
  NiftiInfo info;
  ArrX<double> values;
};

RawImage read_raw(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  RawImage img;
  img.info = parse_header(buf, path.string());
  const auto offset = std::size_t(get<float>(buf, off::vox_offset));
  const Index n = img.info.geom.shape.voxels();
  const std::size_t bytes = std::size_t(n) * dtype_bytes(img.info.dtype);
  if (offset < std::size_t(kHeaderSize) || buf.size() < offset + bytes)
    throw FormatError(path.string() + ": voxel data truncated");

  img.values.resize(n);
  const char* src = buf.data() + offset;
  switch (img.info.dtype) {
    case NiftiDtype::kUint8:
      for (Index i = 0; i < n; ++i) img.values(i) = static_cast<unsigned char>(src[i]);
      break;
    case NiftiDtype::kInt16:
      for (Index i = 0; i < n; ++i) {
        std::int16_t v;
        std::memcpy(&v, src + 2 * i, 2);
        img.values(i) = v;
      }
      break;
    case NiftiDtype::kFloat32:
      for (Index i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, src + 4 * i, 4);
        img.values(i) = v;
      }
      break;
  }
  return img;
}

std::vector<char> make_header(const GridGeometry& g, NiftiDtype dtype) {
  std::vector<char> buf(kVoxOffset, 0);
  put<std::int32_t>(buf, off::sizeof_hdr, kHeaderSize);
  const std::array<std::int16_t, 8> dim{3, std::int16_t(g.shape.nx), std::int16_t(g.shape.ny),
                                        std::int16_t(g.shape.nz), 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) put<std::int16_t>(buf, off::dim + 2 * i, dim[i]);
  put<std::int16_t>(buf, off::datatype, std::int16_t(dtype));
  put<std::int16_t>(buf, off::bitpix, std::int16_t(8 * dtype_bytes(dtype)));
  put<float>(buf, off::pixdim, 1.0f);  // qfac
  for (int i = 0; i < 3; ++i) put<float>(buf, off::pixdim + 4 * (i + 1), float(g.spacing(i)));
  put<float>(buf, off::vox_offset, float(kVoxOffset));
  put<float>(buf, off::scl_slope, 1.0f);
  put<char>(buf, off::xyzt_units, 2);  // mm
  std::strncpy(buf.data() + off::descrip, "zoneprior", 80);
  put<std::int16_t>(buf, off::qform_code, 1);
  put<std::int16_t>(buf, off::sform_code, 1);
  for (int i = 0; i < 3; ++i) {
    put<float>(buf, off::qoffset + 4 * i, float(g.origin(i)));
    put<float>(buf, off::srow + 16 * i + 4 * i, float(g.spacing(i)));
    put<float>(buf, off::srow + 16 * i + 12, float(g.origin(i)));
  }
  std::memcpy(buf.data() + off::magic, "n+1\0", 4);
  return buf;
}

void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  const auto parent = path.parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent))
    throw IoError("parent directory does not exist: " + parent.string());
  if (is_gz(path)) {
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f) throw IoError("cannot write " + path.string());
    const bool ok = gzwrite(f, bytes.data(), unsigned(bytes.size())) == int(bytes.size());
    if (gzclose(f) != Z_OK || !ok) throw IoError("write failed for " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T, typename Src>
void append_as(std::vector<char>& buf, const Src& values) {
  const std::size_t start = buf.size();
  buf.resize(start + sizeof(T) * std::size_t(values.size()));
  for (Index i = 0; i < values.size(); ++i) {
    const T v = static_cast<T>(values(i));
    std::memcpy(buf.data() + start + sizeof(T) * std::size_t(i), &v, sizeof(T));
  }
}

}  // namespace

NiftiInfo read_nifti_info(const std::filesystem::path& path) {
  return parse_header(slurp(path, kHeaderSize), path.string());
}

Volume read_volume(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  Volume v;
  v.geom = raw.info.geom;
  v.data = raw.values.cast<float>();
  if (!v.data.allFinite()) throw ValidationError(path.string() + ": contains NaN or Inf intensities");
  return v;
}

LabelVolume read_labels(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  if (raw.info.dtype == NiftiDtype::kFloat32)
    throw FormatError(path.string() + ": label volumes must use an integer dtype");
  if ((raw.values < 0.0).any() || (raw.values > double(kPz)).any())
    throw ValidationError(path.string() + ": label values outside {0,1,2}");
  LabelVolume l;
  l.geom = raw.info.geom;
  l.labels = raw.values.cast<std::uint8_t>();
  return l;
}

void write_volume(const Volume& v, const std::filesystem::path& path, NiftiDtype dtype) {
  v.validate();
  auto buf = make_header(v.geom, dtype);
  switch (dtype) {
    case NiftiDtype::kFloat32:
      append_as<float>(buf, v.data);
      break;
    case NiftiDtype::kInt16:
    case NiftiDtype::kUint8: {
      const double lo = dtype == NiftiDtype::kUint8 ? 0.0 : -32768.0;
      const double hi = dtype == NiftiDtype::kUint8 ? 255.0 : 32767.0;
      const auto d = v.data.cast<double>();
      if ((d != d.round()).any() || (d < lo).any() || (d > hi).any())
        throw ValidationError("intensities are not representable in the requested integer dtype");
      if (dtype == NiftiDtype::kInt16)
        append_as<std::int16_t>(buf, d);
      else
        append_as<std::uint8_t>(buf, d);
      break;
    }
  }
  write_bytes(path, buf);
}

void write_volume(const LabelVolume& l, const std::filesystem::path& path) {
  l.validate();
  auto buf = make_header(l.geom, NiftiDtype::kUint8);
  append_as<std::uint8_t>(buf, l.labels);
  write_bytes(path, buf);
}

}  // namespace zoneprior
