#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "sf2f/autodiff.hpp"

namespace sf2f {

/// Complex values on an [H, W, D] grid, channel-fastest, stored as split
/// real/imaginary planes.
template <typename T>
struct ComplexGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t depth = 0;
    std::vector<T> re;
    std::vector<T> im;

    ComplexGrid() = default;
    ComplexGrid(std::size_t h, std::size_t w, std::size_t d)
        : height(h), width(w), depth(d), re(h * w * d, T{0}), im(h * w * d, T{0}) {}

    std::size_t size() const noexcept { return re.size(); }
    std::size_t index(std::size_t u, std::size_t v, std::size_t c) const noexcept {
        return (u * width + v) * depth + c;
    }
    std::complex<T> at(std::size_t u, std::size_t v, std::size_t c) const {
        const std::size_t i = index(u, v, c);
        return {re[i], im[i]};
    }
    Shape shape() const { return {height, width, depth}; }
};

/// In-place 1D DFT of `data` (forward: unnormalized, exp(-2 pi i jk / n)).
/// Powers of two use iterative radix-2; other lengths go through Bluestein's
/// chirp-z reduction to a power-of-two convolution.
template <typename T>
void fft1d(std::vector<std::complex<T>>& data, bool inverse);

/// Per-channel 2D DFT of a real grid [H, W, D], unnormalized.
template <typename T>
ComplexGrid<T> fft2(const Tensor<T>& grid);

/// Per-channel 2D DFT of a complex grid, unnormalized.
template <typename T>
ComplexGrid<T> fft2(const ComplexGrid<T>& grid);

/// Inverse per-channel 2D DFT scaled by 1/(H W), full complex result.
template <typename T>
ComplexGrid<T> ifft2_complex(const ComplexGrid<T>& spectrum);

/// Real part of `ifft2_complex`, shaped [H, W, D].
template <typename T>
Tensor<T> ifft2(const ComplexGrid<T>& spectrum);

/// K'(u,v) = (K(u,v) + conj(K(-u mod H, -v mod W))) / 2 per channel.
template <typename T>
ComplexGrid<T> hermitian_symmetrize(const ComplexGrid<T>& k);

/// ifft2(fft2(x) * K) without dropping the imaginary part. `x` is [H, W, D]
/// or [H*W, D] with the grid taken from K.
template <typename T>
ComplexGrid<T> global_filter_complex(const Tensor<T>& x, const ComplexGrid<T>& k);

/// Re(ifft2(fft2(x) * K)) on plain tensors.
template <typename T>
Tensor<T> global_filter(const Tensor<T>& x, const ComplexGrid<T>& k);

/// Differentiable global filter. `x` is [H, W, D] or [H*W, D]; `k_re` and
/// `k_im` are [H, W, D]. Output has the shape of `x`.
template <typename T>
Var<T> global_filter(Graph<T>& g, const Var<T>& x, const Var<T>& k_re, const Var<T>& k_im);

}  // namespace sf2f
