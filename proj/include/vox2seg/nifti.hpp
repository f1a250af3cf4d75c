#ifndef VOX2SEG_NIFTI_HPP
#define VOX2SEG_NIFTI_HPP

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "vox2seg/tensor.hpp"

namespace vox2seg {

static_assert(std::endian::native == std::endian::little,
              "volume I/O assumes a little-endian host");

/// Decoded single-file neuroimaging volume (.nii or .nii.gz, version 1
/// headers). Spatial payload is stored z-fastest, i.e. rank-3 (X,Y,Z) or
/// rank-4 (C,X,Y,Z) with the file's 4th dimension mapped to channels.
template <typename T>
struct NiftiVolume {
    Tensor<T> data;
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
};

namespace nifti_detail {

inline constexpr std::int16_t kDtUint8 = 2;
inline constexpr std::int16_t kDtInt16 = 4;
inline constexpr std::int16_t kDtInt32 = 8;
inline constexpr std::int16_t kDtFloat32 = 16;
inline constexpr std::int16_t kDtFloat64 = 64;

template <typename T>
constexpr std::int16_t dtype_of() {
    if constexpr (std::is_same_v<T, std::uint8_t>) return kDtUint8;
    else if constexpr (std::is_same_v<T, std::int16_t>) return kDtInt16;
    else if constexpr (std::is_same_v<T, std::int32_t>) return kDtInt32;
    else if constexpr (std::is_same_v<T, float>) return kDtFloat32;
    else if constexpr (std::is_same_v<T, double>) return kDtFloat64;
    else static_assert(!sizeof(T), "unsupported voxel type");
}

inline int dtype_size(std::int16_t dt) {
    switch (dt) {
        case kDtUint8: return 1;
        case kDtInt16: return 2;
        case kDtInt32: return 4;
        case kDtFloat32: return 4;
        case kDtFloat64: return 8;
        default: return 0;
    }
}

class GzFile {
public:
    GzFile(const std::string& path, const char* mode) : f_(gzopen(path.c_str(), mode)) {
        if (!f_) throw std::runtime_error("cannot open " + path);
    }
    ~GzFile() {
        if (f_) gzclose(f_);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;

    void read_exact(void* dst, std::size_t bytes, const std::string& path) {
        auto* p = static_cast<char*>(dst);
        while (bytes > 0) {
            const unsigned chunk = bytes > (1u << 30) ? (1u << 30) : static_cast<unsigned>(bytes);
            const int got = gzread(f_, p, chunk);
            if (got <= 0) throw std::runtime_error("truncated or corrupt volume file: " + path);
            p += got;
            bytes -= static_cast<std::size_t>(got);
        }
    }
    void write_exact(const void* src, std::size_t bytes, const std::string& path) {
        const auto* p = static_cast<const char*>(src);
        while (bytes > 0) {
            const unsigned chunk = bytes > (1u << 30) ? (1u << 30) : static_cast<unsigned>(bytes);
            const int put = gzwrite(f_, p, chunk);
            if (put <= 0) throw std::runtime_error("write failed: " + path);
            p += put;
            bytes -= static_cast<std::size_t>(put);
        }
    }
    void skip(std::size_t bytes, const std::string& path) {
        std::vector<char> junk(std::min<std::size_t>(bytes, 4096));
        while (bytes > 0) {
            const std::size_t chunk = std::min(bytes, junk.size());
            read_exact(junk.data(), chunk, path);
            bytes -= chunk;
        }
    }

private:
    gzFile f_;
};

template <typename Out, typename In>
void convert_reorder_in(const std::vector<char>& raw, Tensor<Out>& out, std::int64_t X,
                        std::int64_t Y, std::int64_t Z, std::int64_t C, float slope, float inter) {
    const In* src = reinterpret_cast<const In*>(raw.data());
    const bool scale = slope != 0.0f && !(slope == 1.0f && inter == 0.0f);
    std::int64_t i = 0;  // file order: x fastest, then y, z, channel
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t z = 0; z < Z; ++z)
            for (std::int64_t y = 0; y < Y; ++y)
                for (std::int64_t x = 0; x < X; ++x, ++i) {
                    double v = static_cast<double>(src[i]);
                    if (scale) v = static_cast<double>(slope) * v + static_cast<double>(inter);
                    out[((c * X + x) * Y + y) * Z + z] = static_cast<Out>(v);
                }
}

}  // namespace nifti_detail

/// Read a .nii/.nii.gz volume (little-endian, single-file form), converting
/// voxels to T and applying any stored linear intensity scaling.
template <typename T>
NiftiVolume<T> read_nifti(const std::string& path) {
    using namespace nifti_detail;
    GzFile f(path, "rb");
    std::array<char, 348> hdr{};
    f.read_exact(hdr.data(), hdr.size(), path);

    std::int32_t sizeof_hdr;
    std::memcpy(&sizeof_hdr, hdr.data(), 4);
    if (sizeof_hdr == 1543569408)
        throw std::runtime_error("big-endian volume files are not supported: " + path);
    if (sizeof_hdr != 348) throw std::runtime_error("not a recognized volume file: " + path);
    if (std::memcmp(hdr.data() + 344, "n+1", 3) != 0)
        throw std::runtime_error("unsupported volume container (expected single-file form): " + path);

    std::array<std::int16_t, 8> dim{};
    std::memcpy(dim.data(), hdr.data() + 40, 16);
    if (dim[0] < 3 || dim[0] > 4)
        throw std::runtime_error("expected a 3D or 4D volume: " + path);
    const std::int64_t X = dim[1], Y = dim[2], Z = dim[3];
    const std::int64_t C = dim[0] == 4 ? std::max<std::int64_t>(dim[4], 1) : 1;

    std::int16_t datatype;
    std::memcpy(&datatype, hdr.data() + 70, 2);
    const int dsize = dtype_size(datatype);
    if (dsize == 0)
        throw std::runtime_error("unsupported voxel datatype " + std::to_string(datatype) + ": " + path);

    std::array<float, 8> pixdim{};
    std::memcpy(pixdim.data(), hdr.data() + 76, 32);
    float vox_offset, slope, inter;
    std::memcpy(&vox_offset, hdr.data() + 108, 4);
    std::memcpy(&slope, hdr.data() + 112, 4);
    std::memcpy(&inter, hdr.data() + 116, 4);
    if (vox_offset < 348.0f) throw std::runtime_error("invalid data offset: " + path);
    f.skip(static_cast<std::size_t>(vox_offset) - 348, path);

    const std::int64_t nvox = X * Y * Z * C;
    std::vector<char> raw(static_cast<std::size_t>(nvox * dsize));
    f.read_exact(raw.data(), raw.size(), path);

    NiftiVolume<T> out;
    out.spacing = {pixdim[1], pixdim[2], pixdim[3]};
    out.data = Tensor<T>(C > 1 || dim[0] == 4 ? Shape{C, X, Y, Z} : Shape{X, Y, Z});
    switch (datatype) {
        case kDtUint8: convert_reorder_in<T, std::uint8_t>(raw, out.data, X, Y, Z, C, slope, inter); break;
        case kDtInt16: convert_reorder_in<T, std::int16_t>(raw, out.data, X, Y, Z, C, slope, inter); break;
        case kDtInt32: convert_reorder_in<T, std::int32_t>(raw, out.data, X, Y, Z, C, slope, inter); break;
        case kDtFloat32: convert_reorder_in<T, float>(raw, out.data, X, Y, Z, C, slope, inter); break;
        case kDtFloat64: convert_reorder_in<T, double>(raw, out.data, X, Y, Z, C, slope, inter); break;
        default: break;
    }
    return out;
}

/// Write a rank-3 (X,Y,Z) or rank-4 (C,X,Y,Z) tensor as .nii.gz (or
/// uncompressed .nii when the path does not end in .gz).
template <typename T>
void write_nifti(const std::string& path, const Tensor<T>& t,
                 std::array<float, 3> spacing = {1.0f, 1.0f, 1.0f}) {
    using namespace nifti_detail;
    if (t.rank() != 3 && t.rank() != 4)
        throw std::invalid_argument("write_nifti: expected rank-3 or rank-4 tensor");
    const bool is4d = t.rank() == 4;
    const std::int64_t C = is4d ? t.dim(0) : 1;
    const std::int64_t X = t.dim(is4d ? 1 : 0), Y = t.dim(is4d ? 2 : 1), Z = t.dim(is4d ? 3 : 2);

    std::array<char, 352> hdr{};
    auto put = [&hdr](std::size_t off, const auto& v) { std::memcpy(hdr.data() + off, &v, sizeof v); };
    put(0, std::int32_t{348});
    std::array<std::int16_t, 8> dim{static_cast<std::int16_t>(is4d ? 4 : 3),
                                    static_cast<std::int16_t>(X), static_cast<std::int16_t>(Y),
                                    static_cast<std::int16_t>(Z), static_cast<std::int16_t>(C),
                                    1, 1, 1};
    put(40, dim);
    put(70, dtype_of<T>());
    put(72, static_cast<std::int16_t>(dtype_size(dtype_of<T>()) * 8));
    std::array<float, 8> pixdim{1.0f, spacing[0], spacing[1], spacing[2], 1.0f, 1.0f, 1.0f, 1.0f};
    put(76, pixdim);
    put(108, float{352});
    put(112, float{1});  // scl_slope
    put(116, float{0});  // scl_inter
    hdr[344] = 'n';
    hdr[345] = '+';
    hdr[346] = '1';

    // file order: x fastest, then y, z, channel
    std::vector<T> raw(static_cast<std::size_t>(t.numel()));
    std::int64_t i = 0;
    for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t z = 0; z < Z; ++z)
            for (std::int64_t y = 0; y < Y; ++y)
                for (std::int64_t x = 0; x < X; ++x, ++i)
                    raw[static_cast<std::size_t>(i)] = t[((c * X + x) * Y + y) * Z + z];

    const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
    GzFile f(path, gz ? "wb" : "wbT");
    f.write_exact(hdr.data(), hdr.size(), path);
    f.write_exact(raw.data(), raw.size() * sizeof(T), path);
}

}  // namespace vox2seg

#endif  // VOX2SEG_NIFTI_HPP
