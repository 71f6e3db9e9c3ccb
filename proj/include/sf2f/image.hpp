#pragma once

#include <cstddef>
#include <vector>

#include "sf2f/nn.hpp"
#include "sf2f/tensor.hpp"

namespace sf2f {

/// Single-channel 2D slice, row-major.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, float fill = 0.0f) : height(h), width(w), pixels(h * w, fill) {}

    float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
    float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
    std::size_t size() const noexcept { return pixels.size(); }

    bool operator==(const Image&) const = default;
};

/// Bilinear resampling with pixel-center alignment and edge clamping. Axes
/// that shrink use the triangle kernel widened by the scale factor (antialiased).
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);

/// Per-slice min-max scaling to [0,1]; a constant slice maps to zeros.
Image normalize_slice(const Image& img);

Image flip_horizontal(const Image& img);

/// Rotation by `degrees` (counter-clockwise in row-down coordinates) about
/// the image center, bilinear, with `fill` outside the source grid.
Image rotate(const Image& img, double degrees, float fill = 0.0f);

struct AugmentOptions {
    double flip_probability = 0.5;
    double max_rotation_degrees = 15.0;
    float clamp_min = 0.0f;
    float clamp_max = 1.0f;
    /// Clamp to the input's own [min, max] instead, for unnormalized slices.
    bool clamp_to_input_range = false;
};

/// Random horizontal flip, then a uniform random rotation, then clamping.
Image augment(const Image& img, Rng& rng, const AugmentOptions& opt = {});

/// [H, W, channels] tensor with the slice replicated across channels.
Tensor<float> to_model_input(const Image& img, std::size_t channels = 1);

}  // namespace sf2f
