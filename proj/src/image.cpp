#include "sf2f/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sf2f/error.hpp"

namespace sf2f {

namespace {

// Coordinates within 1e-9 of an integer are snapped so that exact rotations
// (multiples of 90 degrees) reproduce pixels without interpolation error.
double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
}

float sample_or_fill(const Image& img, double y, double x, float fill) {
    const double fy = std::floor(y);
    const double fx = std::floor(x);
    const double wy = y - fy;
    const double wx = x - fx;
    const auto iy = static_cast<long>(fy);
    const auto ix = static_cast<long>(fx);
    const auto h = static_cast<long>(img.height);
    const auto w = static_cast<long>(img.width);
    auto px = [&](long yy, long xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return fill;
        return img.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
    };
    if (iy < -1 || iy >= h || ix < -1 || ix >= w) return fill;
    if (wy == 0.0 && wx == 0.0) return static_cast<float>(px(iy, ix));
    const double top = (1.0 - wx) * px(iy, ix) + wx * px(iy, ix + 1);
    const double bottom = (1.0 - wx) * px(iy + 1, ix) + wx * px(iy + 1, ix + 1);
    return static_cast<float>((1.0 - wy) * top + wy * bottom);
}

}  // namespace

namespace {

struct Tap {
    std::size_t index;
    double weight;
};

// Per-output source taps along one axis. Upsampling is plain two-tap
// bilinear with pixel-center alignment and edge clamping. Downsampling widens
// the triangle kernel by the scale factor so every source pixel contributes
// (antialiased bilinear); weights are renormalized at the borders.
std::vector<std::vector<Tap>> axis_taps(std::size_t in, std::size_t out) {
    std::vector<std::vector<Tap>> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    if (scale <= 1.0) {
        const double max_src = static_cast<double>(in - 1);
        for (std::size_t o = 0; o < out; ++o) {
            const double src = std::clamp((static_cast<double>(o) + 0.5) * scale - 0.5, 0.0, max_src);
            const auto i0 = static_cast<std::size_t>(src);
            const std::size_t i1 = std::min(i0 + 1, in - 1);
            const double w = src - static_cast<double>(i0);
            taps[o] = {{i0, 1.0 - w}, {i1, w}};
        }
        return taps;
    }
    for (std::size_t o = 0; o < out; ++o) {
        const double center = (static_cast<double>(o) + 0.5) * scale;
        const auto lo = static_cast<std::size_t>(std::max(0.0, std::floor(center - scale)));
        const auto hi = std::min(in, static_cast<std::size_t>(std::ceil(center + scale)));
        double total = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const double w = 1.0 - std::abs((static_cast<double>(i) + 0.5 - center) / scale);
            if (w > 0.0) {
                taps[o].push_back({i, w});
                total += w;
            }
        }
        for (auto& t : taps[o]) t.weight /= total;
    }
    return taps;
}

}  // namespace

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
    if (img.size() == 0 || height == 0 || width == 0) throw DimensionError("resize of an empty image");
    if (img.size() != img.height * img.width) throw DimensionError("image pixel count does not match its extents");
    const auto ty = axis_taps(img.height, height);
    const auto tx = axis_taps(img.width, width);
    Image out(height, width);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            double acc = 0.0;
            for (const Tap& r : ty[y]) {
                double row = 0.0;
                for (const Tap& c : tx[x]) row += c.weight * img.at(r.index, c.index);
                acc += r.weight * row;
            }
            out.at(y, x) = static_cast<float>(acc);
        }
    }
    return out;
}

Image normalize_slice(const Image& img) {
    Image out = img;
    if (img.pixels.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    const float lo = *lo_it;
    const float hi = *hi_it;
    if (!(hi > lo)) {
        std::fill(out.pixels.begin(), out.pixels.end(), 0.0f);
        return out;
    }
    const float range = hi - lo;
    for (float& p : out.pixels) p = (p - lo) / range;
    return out;
}

Image flip_horizontal(const Image& img) {
    Image out = img;
    for (std::size_t y = 0; y < img.height; ++y) {
        std::reverse(out.pixels.begin() + static_cast<std::ptrdiff_t>(y * img.width),
                     out.pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * img.width));
    }
    return out;
}

Image rotate(const Image& img, double degrees, float fill) {
    if (degrees == 0.0) return img;
    Image out(img.height, img.width);
    const double theta = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
    const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
    for (std::size_t y = 0; y < img.height; ++y) {
        const double dy = static_cast<double>(y) - cy;
        for (std::size_t x = 0; x < img.width; ++x) {
            const double dx = static_cast<double>(x) - cx;
            // Inverse mapping: rotate the output coordinate by -theta.
            const double src_x = snap(c * dx + s * dy + cx);
            const double src_y = snap(-s * dx + c * dy + cy);
            out.at(y, x) = sample_or_fill(img, src_y, src_x, fill);
        }
    }
    return out;
}

Image augment(const Image& img, Rng& rng, const AugmentOptions& opt) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool flip = unit(rng) < opt.flip_probability;
    const double angle = (2.0 * unit(rng) - 1.0) * opt.max_rotation_degrees;
    float lo = opt.clamp_min;
    float hi = opt.clamp_max;
    if (opt.clamp_to_input_range && !img.pixels.empty()) {
        const auto [a, b] = std::minmax_element(img.pixels.begin(), img.pixels.end());
        lo = *a;
        hi = *b;
    }
    Image out = flip ? flip_horizontal(img) : img;
    out = rotate(out, angle, 0.0f);
    for (float& p : out.pixels) p = std::clamp(p, lo, hi);
    return out;
}

Tensor<float> to_model_input(const Image& img, std::size_t channels) {
    if (channels == 0) throw DimensionError("channel count must be positive");
    std::vector<float> data(img.size() * channels);
    for (std::size_t i = 0; i < img.size(); ++i) {
        for (std::size_t c = 0; c < channels; ++c) data[i * channels + c] = img.pixels[i];
    }
    return Tensor<float>({img.height, img.width, channels}, std::move(data));
}

}  // namespace sf2f
