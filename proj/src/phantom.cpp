#include "sf2f/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "sf2f/error.hpp"
#include "sf2f/io.hpp"
#include "sf2f/model.hpp"
#include "sf2f/nn.hpp"

namespace sf2f {

void PhantomOptions::validate() const {
    if (n_centers == 0) throw DataError("phantom needs at least one center");
    if (n_subjects < 2 || n_subjects % 2 != 0) throw DataError("phantom subject count must be even and at least 2");
    if (n_subjects % (2 * n_centers) != 0) {
        throw DataError("phantom subject count must be a multiple of 2 * centers for balanced labels per center");
    }
    if (extents[0] == 0 || extents[1] == 0 || extents[2] == 0) throw DataError("phantom extents must be positive");
    if (slab_lo < 1 || slab_hi < slab_lo || static_cast<std::size_t>(slab_hi) > extents[1]) {
        throw DataError("phantom slab outside the coronal range");
    }
    if (!(grating_period > 0.0) || noise_std < 0.0 || center_bias < 0.0 || center_bias >= 1.0) {
        throw DataError("invalid phantom signal or noise parameters");
    }
}

std::string phantom_subject_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sub-%03zu", i);
    return buf;
}

std::string phantom_center_name(std::size_t c) { return "center" + std::to_string(c); }

std::size_t phantom_center(const PhantomOptions& opt, std::size_t i) { return i % opt.n_centers; }

int phantom_label(const PhantomOptions& opt, std::size_t i) {
    return (i / opt.n_centers) % 2 == 0 ? kControl : kPatient;
}

double phantom_center_gain(const PhantomOptions& opt, std::size_t c) {
    if (opt.n_centers == 1) return 1.0;
    const double t = static_cast<double>(c) / static_cast<double>(opt.n_centers - 1);
    return 1.0 + opt.center_bias * (2.0 * t - 1.0);
}

double phantom_noise_std(const PhantomOptions& opt, std::size_t c) {
    if (opt.n_centers == 1) return opt.noise_std;
    const double t = static_cast<double>(c) / static_cast<double>(opt.n_centers - 1);
    return opt.noise_std * (1.0 + opt.noise_spread * t);
}

Volume phantom_volume_at_center(const PhantomOptions& opt, std::size_t i, std::size_t center, bool with_signal) {
    opt.validate();
    const auto [nx, ny, nz] = opt.extents;
    Volume v(nx, ny, nz);
    v.subject_id = phantom_subject_id(i);
    v.center = phantom_center_name(center);
    v.modality = "synthetic";
    v.label = phantom_label(opt, i);

    Rng anatomy(derive_seed(opt.seed, 0x414e41ULL, i));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double j = opt.anatomy_jitter;
    const double cx = 0.5 * static_cast<double>(nx - 1) + 0.02 * static_cast<double>(nx) * unit(anatomy);
    const double cy = 0.5 * static_cast<double>(ny - 1) + 0.02 * static_cast<double>(ny) * unit(anatomy);
    const double cz = 0.5 * static_cast<double>(nz - 1) + 0.02 * static_cast<double>(nz) * unit(anatomy);
    const double rx = 0.37 * static_cast<double>(nx) * (1.0 + j * unit(anatomy));
    const double ry = 0.40 * static_cast<double>(ny) * (1.0 + j * unit(anatomy));
    const double rz = 0.40 * static_cast<double>(nz) * (1.0 + j * unit(anatomy));
    const double inner = 0.55 * (1.0 + j * unit(anatomy));
    const double wave_x = opt.texture_amplitude * (1.0 + unit(anatomy));
    const double wave_phase = std::numbers::pi * unit(anatomy);

    const double gain = phantom_center_gain(opt, center);
    const double amplitude = opt.signal_fraction * opt.background;
    const bool signal = with_signal && v.label == kPatient;
    const double mid_x = 0.5 * static_cast<double>(nx - 1);

    std::vector<double> grating(nz);
    for (std::size_t z = 0; z < nz; ++z) {
        grating[z] = amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(z) / opt.grating_period);
    }

    for (std::size_t z = 0; z < nz; ++z) {
        const double dz = (static_cast<double>(z) - cz) / rz;
        for (std::size_t y = 0; y < ny; ++y) {
            const double dy = (static_cast<double>(y) - cy) / ry;
            const int y1 = static_cast<int>(y) + 1;
            const bool in_slab = signal && y1 >= opt.slab_lo && y1 <= opt.slab_hi;
            for (std::size_t x = 0; x < nx; ++x) {
                const double dx = (static_cast<double>(x) - cx) / rx;
                const double r2 = dx * dx + dy * dy + dz * dz;
                if (r2 > 1.0) continue;
                double tissue = opt.background * (r2 < inner * inner ? 1.2 : 1.0);
                tissue *= 1.0 + wave_x * std::sin(0.15 * static_cast<double>(x) + wave_phase);
                if (in_slab) {
                    const double off = std::abs(std::abs(static_cast<double>(x) - mid_x) - opt.column_offset);
                    if (off <= opt.column_half_width) tissue += grating[z];
                }
                v.at(x, y, z) = static_cast<float>(gain * tissue);
            }
        }
    }

    const double sigma = phantom_noise_std(opt, center);
    if (sigma > 0.0) {
        Rng noise(derive_seed(opt.seed, 0x4e4f49ULL, i));
        std::normal_distribution<double> gauss(0.0, sigma);
        for (float& value : v.data) value = static_cast<float>(value + gauss(noise));
    }
    return v;
}

Volume phantom_volume(const PhantomOptions& opt, std::size_t i, bool with_signal) {
    return phantom_volume_at_center(opt, i, phantom_center(opt, i), with_signal);
}

Manifest write_phantom_dataset(const PhantomOptions& opt, const std::string& dir) {
    opt.validate();
    std::filesystem::create_directories(dir);
    Manifest m;
    for (std::size_t i = 0; i < opt.n_subjects; ++i) {
        const Volume v = phantom_volume(opt, i);
        const std::string file = v.subject_id + ".rvol";
        write_rvol(v, (std::filesystem::path(dir) / file).string());
        m.rows.push_back({v.subject_id, v.label, v.center, v.modality, file});
    }
    const std::string text = format_manifest(m);
    write_file_bytes((std::filesystem::path(dir) / "manifest.csv").string(),
                     std::vector<std::uint8_t>(text.begin(), text.end()));
    return m;
}

}  // namespace sf2f
