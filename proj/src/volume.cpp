#include "sf2f/volume.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "sf2f/io.hpp"
#include "sf2f/error.hpp"

namespace sf2f {

static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");

namespace {

constexpr std::size_t kNiftiHeaderSize = 348;

class HeaderView {
public:
    HeaderView(const std::vector<std::uint8_t>& bytes, bool swap) : bytes_(bytes), swap_(swap) {}

    template <typename U>
    U get(std::size_t offset) const {
        U v;
        std::memcpy(&v, bytes_.data() + offset, sizeof(U));
        if (swap_) v = byteswap(v);
        return v;
    }

    template <typename U>
    U byteswap(U v) const {
        std::uint8_t b[sizeof(U)];
        std::memcpy(b, &v, sizeof(U));
        std::reverse(b, b + sizeof(U));
        std::memcpy(&v, b, sizeof(U));
        return v;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    bool swap_;
};

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::uint8_t> gunzip_file(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    for (;;) {
        const int n = gzread(f, buf, sizeof(buf));
        if (n < 0) {
            int err = 0;
            const std::string msg = gzerror(f, &err);
            gzclose(f);
            throw FormatError("gzip", "decompression of '" + path + "' failed: " + msg);
        }
        if (n == 0) break;
        out.insert(out.end(), buf, buf + n);
    }
    gzclose(f);
    return out;
}

}  // namespace

Volume parse_nifti(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kNiftiHeaderSize) {
        throw FormatError("header", "file has " + std::to_string(bytes.size()) + " bytes, NIfTI-1 header needs 348");
    }
    std::int32_t sizeof_hdr;
    std::memcpy(&sizeof_hdr, bytes.data(), 4);
    bool swap = false;
    if (sizeof_hdr != 348) {
        if (HeaderView(bytes, true).get<std::int32_t>(0) != 348) {
            throw FormatError("sizeof_hdr", "sizeof_hdr is neither 348 nor byte-swapped 348");
        }
        swap = true;
    }
    const HeaderView h(bytes, swap);

    const char* magic = reinterpret_cast<const char*>(bytes.data() + 344);
    const bool single = std::memcmp(magic, "n+1\0", 4) == 0;
    const bool pair = std::memcmp(magic, "ni1\0", 4) == 0;
    if (!single && !pair) throw FormatError("magic", "bad NIfTI-1 magic (expected \"n+1\" or \"ni1\")");

    const auto ndim = h.get<std::int16_t>(40);
    if (ndim != 3) throw FormatError("dim", "dim[0] = " + std::to_string(ndim) + ", only 3D volumes are supported");
    std::array<std::size_t, 3> ext{};
    for (int i = 0; i < 3; ++i) {
        const auto d = h.get<std::int16_t>(42 + 2 * i);
        if (d <= 0) throw FormatError("dim", "dim[" + std::to_string(i + 1) + "] = " + std::to_string(d));
        ext[i] = static_cast<std::size_t>(d);
    }
    const auto datatype = h.get<std::int16_t>(70);
    std::size_t elem = 0;
    switch (datatype) {
        case 2: elem = 1; break;
        case 4: elem = 2; break;
        case 16: elem = 4; break;
        default:
            throw FormatError("datatype", "unsupported NIfTI datatype code " + std::to_string(datatype) +
                                              " (supported: 2 uint8, 4 int16, 16 float32)");
    }
    const float slope = h.get<float>(112);
    const float inter = h.get<float>(116);
    const float vox_offset = h.get<float>(108);
    std::size_t offset = single ? 352 : 0;
    if (vox_offset > 0.0f) offset = static_cast<std::size_t>(vox_offset);
    if (single && offset < kNiftiHeaderSize) throw FormatError("vox_offset", "vox_offset inside the header");

    Volume v(ext[0], ext[1], ext[2]);
    for (int i = 0; i < 3; ++i) {
        const float p = h.get<float>(80 + 4 * i);
        v.spacing[i] = p > 0.0f ? p : 1.0;
    }
    const std::size_t n = v.size();
    if (bytes.size() < offset || bytes.size() - offset < n * elem) {
        throw FormatError("data", "voxel data truncated: need " + std::to_string(n * elem) + " bytes at offset " +
                                      std::to_string(offset) + ", file has " + std::to_string(bytes.size()));
    }
    const std::uint8_t* src = bytes.data() + offset;
    const bool scale = slope != 0.0f && std::isfinite(slope);
    for (std::size_t i = 0; i < n; ++i) {
        double raw = 0.0;
        switch (datatype) {
            case 2: raw = src[i]; break;
            case 4: {
                std::int16_t s;
                std::memcpy(&s, src + 2 * i, 2);
                raw = swap ? h.byteswap(s) : s;
                break;
            }
            default: {
                float f;
                std::memcpy(&f, src + 4 * i, 4);
                raw = swap ? h.byteswap(f) : f;
                break;
            }
        }
        const double value = scale ? raw * slope + inter : raw;
        if (!std::isfinite(value)) throw DataError("non-finite voxel at linear index " + std::to_string(i));
        v.data[i] = static_cast<float>(value);
    }
    return v;
}

Volume read_nifti(const std::string& path) {
    if (has_suffix(path, ".gz")) return parse_nifti(gunzip_file(path));
    return parse_nifti(read_file_bytes(path));
}

std::vector<std::uint8_t> encode_rvol(const Volume& v) {
    if (v.size() != v.extents[0] * v.extents[1] * v.extents[2]) {
        throw DimensionError("volume data does not match its extents");
    }
    std::vector<std::uint8_t> out(20 + 4 * v.size());
    std::memcpy(out.data(), "RVOL", 4);
    const std::uint32_t header[4] = {kRvolVersion, static_cast<std::uint32_t>(v.extents[0]),
                                     static_cast<std::uint32_t>(v.extents[1]),
                                     static_cast<std::uint32_t>(v.extents[2])};
    std::memcpy(out.data() + 4, header, sizeof(header));
    std::memcpy(out.data() + 20, v.data.data(), 4 * v.size());
    return out;
}

Volume decode_rvol(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "RVOL", 4) != 0) {
        throw FormatError("magic", "not an RVOL file (expected \"RVOL\")");
    }
    if (bytes.size() < 20) throw FormatError("header", "RVOL header truncated");
    std::uint32_t header[4];
    std::memcpy(header, bytes.data() + 4, sizeof(header));
    if (header[0] != kRvolVersion) {
        throw FormatError("version", "unsupported RVOL version " + std::to_string(header[0]));
    }
    if (header[1] == 0 || header[2] == 0 || header[3] == 0) throw FormatError("extents", "zero extent");
    Volume v(header[1], header[2], header[3]);
    if (bytes.size() - 20 != 4 * v.size()) {
        throw FormatError("data", "RVOL payload has " + std::to_string(bytes.size() - 20) + " bytes, expected " +
                                      std::to_string(4 * v.size()));
    }
    std::memcpy(v.data.data(), bytes.data() + 20, 4 * v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v.data[i])) throw DataError("non-finite voxel at linear index " + std::to_string(i));
    }
    return v;
}

void write_rvol(const Volume& v, const std::string& path) { write_file_bytes(path, encode_rvol(v)); }

Volume read_rvol(const std::string& path) { return decode_rvol(read_file_bytes(path)); }

Volume load_volume(const std::string& path) {
    if (has_suffix(path, ".rvol")) return read_rvol(path);
    if (has_suffix(path, ".nii") || has_suffix(path, ".nii.gz")) return read_nifti(path);
    throw DataError("unrecognized volume extension for '" + path + "' (expected .rvol, .nii or .nii.gz)");
}

Image coronal_slice(const Volume& v, std::size_t y1) {
    if (y1 < 1 || y1 > v.extents[1]) {
        throw DataError("coronal index " + std::to_string(y1) + " outside [1, " + std::to_string(v.extents[1]) + "]");
    }
    const std::size_t y = y1 - 1;
    Image img(v.extents[2], v.extents[0]);
    for (std::size_t z = 0; z < v.extents[2]; ++z) {
        for (std::size_t x = 0; x < v.extents[0]; ++x) img.at(z, x) = v.at(x, y, z);
    }
    return img;
}

namespace {
void check_span(int lo, int hi, std::size_t count) {
    if (lo < 1 || hi < lo || static_cast<std::size_t>(hi) > count) {
        throw DataError("slice span [" + std::to_string(lo) + "," + std::to_string(hi) + "] outside [1, " +
                        std::to_string(count) + "]");
    }
}
}  // namespace

SliceSet select_slices(const Volume& v, int lo, int hi, const SliceOptions& opt) {
    check_span(lo, hi, v.extents[1]);
    SliceSet set{v.subject_id, v.center, v.label, {}};
    set.slices.reserve(static_cast<std::size_t>(hi - lo + 1));
    for (int k = lo; k <= hi; ++k) {
        Image img = resize_bilinear(coronal_slice(v, static_cast<std::size_t>(k)), opt.height, opt.width);
        set.slices.push_back({k, opt.normalize ? normalize_slice(img) : std::move(img)});
    }
    return set;
}

SliceSet SliceStack::select(int lo, int hi, bool normalize) const {
    check_span(lo, hi, slices.size());
    SliceSet set{subject_id, center, label, {}};
    for (int k = lo; k <= hi; ++k) {
        const Image& img = slices[static_cast<std::size_t>(k - 1)];
        set.slices.push_back({k, normalize ? normalize_slice(img) : img});
    }
    return set;
}

SliceStack resize_all_slices(const Volume& v, std::size_t height, std::size_t width) {
    SliceStack stack{v.subject_id, v.center, v.label, {}};
    stack.slices.reserve(v.extents[1]);
    for (std::size_t k = 1; k <= v.extents[1]; ++k) {
        stack.slices.push_back(resize_bilinear(coronal_slice(v, k), height, width));
    }
    return stack;
}

}  // namespace sf2f
