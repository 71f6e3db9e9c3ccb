#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sf2f/dataset.hpp"
#include "sf2f/volume.hpp"

namespace sf2f {

/// Synthetic head-like volumes. Every subject gets a jittered ellipsoidal
/// "brain"; patients additionally carry a sinusoidal grating along z inside two
/// parasagittal columns restricted to a coronal slab. Each center applies a
/// global gain 1 + bias and its own noise level.
struct PhantomOptions {
    std::size_t n_subjects = 60;
    std::size_t n_centers = 3;
    std::uint64_t seed = 0;
    std::array<std::size_t, 3> extents{182, 218, 182};
    double background = 100.0;
    double signal_fraction = 0.10;  // grating amplitude relative to background
    int slab_lo = 105;              // 1-based coronal indices, inclusive
    int slab_hi = 130;
    double grating_period = 48.0;   // voxels along z
    double column_offset = 28.0;    // distance of each column from the mid-sagittal plane
    double column_half_width = 16.0;
    double center_bias = 0.05;      // gains spread evenly over [1 - bias, 1 + bias]
    double noise_std = 10.0;        // voxel noise of the first center
    double noise_spread = 0.5;      // last center's noise is (1 + spread) times the first's
    double anatomy_jitter = 0.05;
    double texture_amplitude = 0.0;  // mean depth of an optional subject-specific x-modulation of tissue

    void validate() const;
};

std::string phantom_subject_id(std::size_t i);
std::string phantom_center_name(std::size_t c);
std::size_t phantom_center(const PhantomOptions& opt, std::size_t i);
int phantom_label(const PhantomOptions& opt, std::size_t i);
double phantom_center_gain(const PhantomOptions& opt, std::size_t c);
double phantom_noise_std(const PhantomOptions& opt, std::size_t c);

/// Subject `i`. With `with_signal` false a patient is rendered without its
/// grating, everything else (anatomy, gain, noise) unchanged.
Volume phantom_volume(const PhantomOptions& opt, std::size_t i, bool with_signal = true);

/// Override of the center assignment, for building matched pairs in tests.
Volume phantom_volume_at_center(const PhantomOptions& opt, std::size_t i, std::size_t center, bool with_signal);

/// Writes sub-XXX.rvol files and manifest.csv into `dir`; returns the manifest.
Manifest write_phantom_dataset(const PhantomOptions& opt, const std::string& dir);

}  // namespace sf2f
