#pragma once

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <string>

#include "voxelseg/tensor.hpp"

namespace voxelseg {

// NIfTI-1 single-file (.nii / .nii.gz) container, 348-byte header layout.
#pragma pack(push, 1)
struct NiftiHeader {
    std::int32_t sizeof_hdr = 348;
    char data_type[10] = {};
    char db_name[18] = {};
    std::int32_t extents = 0;
    std::int16_t session_error = 0;
    char regular = 'r';
    char dim_info = 0;
    std::int16_t dim[8] = {3, 1, 1, 1, 1, 1, 1, 1};
    float intent_p1 = 0, intent_p2 = 0, intent_p3 = 0;
    std::int16_t intent_code = 0;
    std::int16_t datatype = 0;
    std::int16_t bitpix = 0;
    std::int16_t slice_start = 0;
    float pixdim[8] = {1, 1, 1, 1, 1, 1, 1, 1};
    float vox_offset = 352;
    float scl_slope = 1;
    float scl_inter = 0;
    std::int16_t slice_end = 0;
    char slice_code = 0;
    char xyzt_units = 0;
    float cal_max = 0, cal_min = 0;
    float slice_duration = 0, toffset = 0;
    std::int32_t glmax = 0, glmin = 0;
    char descrip[80] = {};
    char aux_file[24] = {};
    std::int16_t qform_code = 0, sform_code = 0;
    float quatern_b = 0, quatern_c = 0, quatern_d = 0;
    float qoffset_x = 0, qoffset_y = 0, qoffset_z = 0;
    float srow_x[4] = {1, 0, 0, 0};
    float srow_y[4] = {0, 1, 0, 0};
    float srow_z[4] = {0, 0, 1, 0};
    char intent_name[16] = {};
    char magic[4] = {'n', '+', '1', '\0'};
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be exactly 348 bytes");

namespace niftidt {
constexpr std::int16_t kUint8 = 2;
constexpr std::int16_t kInt16 = 4;
constexpr std::int16_t kInt32 = 8;
constexpr std::int16_t kFloat32 = 16;
constexpr std::int16_t kFloat64 = 64;

inline std::size_t byte_width(std::int16_t dt) {
    switch (dt) {
        case kUint8: return 1;
        case kInt16: return 2;
        case kInt32: return 4;
        case kFloat32: return 4;
        case kFloat64: return 8;
        default: throw IoError("nifti: unsupported datatype code " + std::to_string(dt));
    }
}
}  // namespace niftidt

namespace detail {

inline void bswap_inplace(void* p, std::size_t width) {
    auto* b = static_cast<unsigned char*>(p);
    for (std::size_t i = 0; i < width / 2; ++i) std::swap(b[i], b[width - 1 - i]);
}

inline void bswap_header(NiftiHeader& h) {
    bswap_inplace(&h.sizeof_hdr, 4);
    bswap_inplace(&h.extents, 4);
    bswap_inplace(&h.session_error, 2);
    for (auto& v : h.dim) bswap_inplace(&v, 2);
    bswap_inplace(&h.intent_p1, 4);
    bswap_inplace(&h.intent_p2, 4);
    bswap_inplace(&h.intent_p3, 4);
    bswap_inplace(&h.intent_code, 2);
    bswap_inplace(&h.datatype, 2);
    bswap_inplace(&h.bitpix, 2);
    bswap_inplace(&h.slice_start, 2);
    for (auto& v : h.pixdim) bswap_inplace(&v, 4);
    bswap_inplace(&h.vox_offset, 4);
    bswap_inplace(&h.scl_slope, 4);
    bswap_inplace(&h.scl_inter, 4);
    bswap_inplace(&h.slice_end, 2);
    bswap_inplace(&h.cal_max, 4);
    bswap_inplace(&h.cal_min, 4);
    bswap_inplace(&h.slice_duration, 4);
    bswap_inplace(&h.toffset, 4);
    bswap_inplace(&h.glmax, 4);
    bswap_inplace(&h.glmin, 4);
    bswap_inplace(&h.qform_code, 2);
    bswap_inplace(&h.sform_code, 2);
    bswap_inplace(&h.quatern_b, 4);
    bswap_inplace(&h.quatern_c, 4);
    bswap_inplace(&h.quatern_d, 4);
    bswap_inplace(&h.qoffset_x, 4);
    bswap_inplace(&h.qoffset_y, 4);
    bswap_inplace(&h.qoffset_z, 4);
    for (auto& v : h.srow_x) bswap_inplace(&v, 4);
    for (auto& v : h.srow_y) bswap_inplace(&v, 4);
    for (auto& v : h.srow_z) bswap_inplace(&v, 4);
}

// gzread also passes plain files through, so one read path covers both.
inline std::vector<unsigned char> read_file_maybe_gz(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("nifti: cannot open '" + path + "'");
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw IoError("nifti: decompression failed for '" + path + "'");
    return out;
}

}  // namespace detail

struct NiftiRead {
    NiftiHeader header;  // in native byte order after any swap
    Tensor voxels;       // [D,H,W] doubles with scl_slope/scl_inter applied
    bool byteswapped = false;
};

inline NiftiRead read_nifti(const std::string& path) {
    const std::vector<unsigned char> bytes = detail::read_file_maybe_gz(path);
    if (bytes.size() < sizeof(NiftiHeader)) throw IoError("nifti: '" + path + "' is shorter than a header");
    NiftiRead r;
    std::memcpy(&r.header, bytes.data(), sizeof(NiftiHeader));
    if (r.header.sizeof_hdr != 348) {
        NiftiHeader swapped = r.header;
        detail::bswap_header(swapped);
        if (swapped.sizeof_hdr != 348)
            throw IoError("nifti: '" + path + "' has sizeof_hdr " + std::to_string(r.header.sizeof_hdr) +
                          "; not a NIfTI-1 file");
        r.header = swapped;
        r.byteswapped = true;
    }
    if (std::memcmp(r.header.magic, "ni1", 4) == 0)
        throw IoError("nifti: '" + path + "' uses the two-file ni1 header/data form, which is not supported");
    if (std::memcmp(r.header.magic, "n+1", 4) != 0) throw IoError("nifti: '" + path + "' has a bad magic field");
    if (r.header.dim[0] < 1 || r.header.dim[0] > 7)
        throw IoError("nifti: dim[0]=" + std::to_string(r.header.dim[0]) + " out of range");
    for (int i = 4; i <= r.header.dim[0]; ++i)
        if (r.header.dim[i] > 1) throw IoError("nifti: only 3D volumes are supported");

    const std::size_t W = std::max<std::int16_t>(1, r.header.dim[1]);
    const std::size_t H = r.header.dim[0] >= 2 ? std::max<std::int16_t>(1, r.header.dim[2]) : 1;
    const std::size_t D = r.header.dim[0] >= 3 ? std::max<std::int16_t>(1, r.header.dim[3]) : 1;
    const std::size_t count = D * H * W;
    const std::size_t width = niftidt::byte_width(r.header.datatype);
    if (r.header.bitpix != static_cast<std::int16_t>(width * 8))
        throw IoError("nifti: bitpix " + std::to_string(r.header.bitpix) + " inconsistent with datatype");
    const std::size_t offset = static_cast<std::size_t>(r.header.vox_offset);
    if (r.header.vox_offset < 348 || static_cast<float>(offset) != r.header.vox_offset)
        throw IoError("nifti: invalid vox_offset");
    if (bytes.size() < offset + count * width)
        throw IoError("nifti: data section truncated (" + std::to_string(bytes.size() - offset) + " of " +
                      std::to_string(count * width) + " bytes)");

    r.voxels = Tensor::zeros({D, H, W});
    const unsigned char* src = bytes.data() + offset;
    const double slope = r.header.scl_slope == 0.0f ? 1.0 : static_cast<double>(r.header.scl_slope);
    const double inter = r.header.scl_slope == 0.0f ? 0.0 : static_cast<double>(r.header.scl_inter);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char raw[8];
        std::memcpy(raw, src + i * width, width);
        if (r.byteswapped) detail::bswap_inplace(raw, width);
        double v = 0.0;
        switch (r.header.datatype) {
            case niftidt::kUint8: v = raw[0]; break;
            case niftidt::kInt16: {
                std::int16_t x;
                std::memcpy(&x, raw, 2);
                v = x;
                break;
            }
            case niftidt::kInt32: {
                std::int32_t x;
                std::memcpy(&x, raw, 4);
                v = x;
                break;
            }
            case niftidt::kFloat32: {
                float x;
                std::memcpy(&x, raw, 4);
                v = x;
                break;
            }
            case niftidt::kFloat64: std::memcpy(&v, raw, 8); break;
        }
        r.voxels.data()[i] = v * slope + inter;
    }
    return r;
}

inline NiftiHeader make_nifti_header(std::size_t D, std::size_t H, std::size_t W, std::int16_t datatype) {
    NiftiHeader h;
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(W);
    h.dim[2] = static_cast<std::int16_t>(H);
    h.dim[3] = static_cast<std::int16_t>(D);
    h.datatype = datatype;
    h.bitpix = static_cast<std::int16_t>(niftidt::byte_width(datatype) * 8);
    return h;
}

inline void write_nifti(const std::string& path, const NiftiHeader& header, const Tensor& voxels, bool gzip) {
    require(voxels.rank() == 3, "write_nifti: voxels must be [D,H,W]");
    NiftiHeader h = header;
    h.sizeof_hdr = 348;
    h.vox_offset = 352;
    std::memcpy(h.magic, "n+1", 4);
    const std::size_t D = voxels.shape()[0], H = voxels.shape()[1], W = voxels.shape()[2];
    if (h.dim[0] != 3 || h.dim[1] != static_cast<std::int16_t>(W) || h.dim[2] != static_cast<std::int16_t>(H) ||
        h.dim[3] != static_cast<std::int16_t>(D))
        throw IoError("write_nifti: header dim does not match the voxel tensor");
    const std::size_t width = niftidt::byte_width(h.datatype);
    if (h.bitpix != static_cast<std::int16_t>(width * 8)) throw IoError("write_nifti: bitpix/datatype mismatch");

    std::vector<unsigned char> payload(voxels.size() * width);
    for (std::size_t i = 0; i < voxels.size(); ++i) {
        const double v = voxels.data()[i];
        unsigned char* dst = payload.data() + i * width;
        switch (h.datatype) {
            case niftidt::kUint8: dst[0] = static_cast<unsigned char>(v); break;
            case niftidt::kInt16: {
                const std::int16_t x = static_cast<std::int16_t>(v);
                std::memcpy(dst, &x, 2);
                break;
            }
            case niftidt::kInt32: {
                const std::int32_t x = static_cast<std::int32_t>(v);
                std::memcpy(dst, &x, 4);
                break;
            }
            case niftidt::kFloat32: {
                const float x = static_cast<float>(v);
                std::memcpy(dst, &x, 4);
                break;
            }
            case niftidt::kFloat64: std::memcpy(dst, &v, 8); break;
        }
    }

    const char pad[4] = {0, 0, 0, 0};  // no extensions
    if (gzip) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f) throw IoError("write_nifti: cannot open '" + path + "'");
        bool ok = gzwrite(f, &h, sizeof(h)) == static_cast<int>(sizeof(h));
        ok = ok && gzwrite(f, pad, 4) == 4;
        ok = ok && (payload.empty() ||
                    gzwrite(f, payload.data(), static_cast<unsigned>(payload.size())) ==
                        static_cast<int>(payload.size()));
        gzclose(f);
        if (!ok) throw IoError("write_nifti: write failed for '" + path + "'");
    } else {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("write_nifti: cannot open '" + path + "'");
        f.write(reinterpret_cast<const char*>(&h), sizeof(h));
        f.write(pad, 4);
        f.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
        if (!f) throw IoError("write_nifti: write failed for '" + path + "'");
    }
}

// key=value dump of every parsed field (inspect command).
inline std::string nifti_header_dump(const NiftiHeader& h, bool byteswapped) {
    std::ostringstream os;
    os << "sizeof_hdr=" << h.sizeof_hdr << "\n";
    os << "endianness=" << (byteswapped ? "big" : "native") << "\n";
    os << "dim=[";
    for (int i = 0; i < 8; ++i) os << (i ? "," : "") << h.dim[i];
    os << "]\n";
    os << "datatype=" << h.datatype << "\n";
    os << "bitpix=" << h.bitpix << "\n";
    os << "pixdim=[";
    for (int i = 0; i < 8; ++i) os << (i ? "," : "") << h.pixdim[i];
    os << "]\n";
    os << "vox_offset=" << h.vox_offset << "\n";
    os << "scl_slope=" << h.scl_slope << "\n";
    os << "scl_inter=" << h.scl_inter << "\n";
    os << "cal_max=" << h.cal_max << "\n";
    os << "cal_min=" << h.cal_min << "\n";
    os << "qform_code=" << h.qform_code << "\n";
    os << "sform_code=" << h.sform_code << "\n";
    auto row = [&os](const char* name, const float* r) {
        os << name << "=[" << r[0] << "," << r[1] << "," << r[2] << "," << r[3] << "]\n";
    };
    row("srow_x", h.srow_x);
    row("srow_y", h.srow_y);
    row("srow_z", h.srow_z);
    os << "magic=" << std::string(h.magic, h.magic + 3) << "\n";
    return os.str();
}

}  // namespace voxelseg
