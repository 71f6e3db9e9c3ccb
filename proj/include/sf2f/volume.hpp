#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sf2f/image.hpp"

namespace sf2f {

/// 3D scan with voxels stored X-fastest: index = x + X * (y + Y * z).
struct Volume {
    std::array<std::size_t, 3> extents{0, 0, 0};
    std::vector<float> data;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::string subject_id;
    std::string center;
    std::string modality;
    int label = -1;

    Volume() = default;
    Volume(std::size_t nx, std::size_t ny, std::size_t nz, float fill = 0.0f)
        : extents{nx, ny, nz}, data(nx * ny * nz, fill) {}

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + extents[0] * (y + extents[1] * z);
    }
    float& at(std::size_t x, std::size_t y, std::size_t z) { return data[index(x, y, z)]; }
    float at(std::size_t x, std::size_t y, std::size_t z) const { return data[index(x, y, z)]; }
    std::size_t size() const noexcept { return data.size(); }
};

/// NIfTI-1 single-file image (.nii or gzip-compressed .nii.gz).
Volume read_nifti(const std::string& path);
/// Parses an uncompressed NIfTI-1 byte stream.
Volume parse_nifti(const std::vector<std::uint8_t>& bytes);

// RVOL: "RVOL" | u32 version | u32 X, Y, Z | f32 voxels, little-endian, X-fastest.
inline constexpr std::uint32_t kRvolVersion = 1;
std::vector<std::uint8_t> encode_rvol(const Volume& v);
Volume decode_rvol(const std::vector<std::uint8_t>& bytes);
void write_rvol(const Volume& v, const std::string& path);
Volume read_rvol(const std::string& path);

/// Dispatches on extension: .rvol, .nii, .nii.gz.
Volume load_volume(const std::string& path);

/// Coronal plane at 1-based index `y1` (second axis): rows run along z, columns along x.
Image coronal_slice(const Volume& v, std::size_t y1);

struct SliceOptions {
    std::size_t height = 224;
    std::size_t width = 224;
    bool normalize = true;
};

struct Slice {
    int index = 0;  // 1-based coronal index
    Image image;
};

struct SliceSet {
    std::string subject_id;
    std::string center;
    int label = -1;
    std::vector<Slice> slices;
};

/// Coronal slices lo..hi (1-based, inclusive), resized and optionally normalized.
SliceSet select_slices(const Volume& v, int lo, int hi, const SliceOptions& opt = {});

/// Every coronal slice of a volume resized but not normalized, for cheap
/// re-selection of different spans.
struct SliceStack {
    std::string subject_id;
    std::string center;
    int label = -1;
    std::vector<Image> slices;  // slices[i] is coronal index i + 1

    SliceSet select(int lo, int hi, bool normalize) const;
};

SliceStack resize_all_slices(const Volume& v, std::size_t height, std::size_t width);

}  // namespace sf2f
