#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

namespace sf2f::testing {

// Single-file NIfTI-1 header built byte by byte (little-endian, vox_offset
// 352, spacing 1 x 1.5 x 2); voxel data is appended after it.
struct NiftiFixture {
    std::vector<std::uint8_t> bytes = std::vector<std::uint8_t>(352, 0);

    template <typename U>
    void put(std::size_t offset, U v) {
        std::memcpy(bytes.data() + offset, &v, sizeof(U));
    }

    NiftiFixture(std::int16_t nx, std::int16_t ny, std::int16_t nz, std::int16_t datatype, std::int16_t bitpix) {
        put<std::int32_t>(0, 348);
        put<std::int16_t>(40, 3);
        put<std::int16_t>(42, nx);
        put<std::int16_t>(44, ny);
        put<std::int16_t>(46, nz);
        put<std::int16_t>(48, 1);
        put<std::int16_t>(70, datatype);
        put<std::int16_t>(72, bitpix);
        put<float>(76, 1.0f);
        put<float>(80, 1.0f);
        put<float>(84, 1.5f);
        put<float>(88, 2.0f);
        put<float>(108, 352.0f);
        std::memcpy(bytes.data() + 344, "n+1\0", 4);
    }

    template <typename U>
    void append(U v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(U));
    }
};

inline NiftiFixture float_fixture() {
    NiftiFixture f(2, 3, 2, 16, 32);
    for (int i = 0; i < 12; ++i) f.append<float>(static_cast<float>(i) * 0.5f - 1.0f);
    return f;
}

}  // namespace sf2f::testing
