#include "sf2f/spectral.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <numbers>

namespace sf2f {

namespace {

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

template <typename T>
class Radix2Plan {
public:
    explicit Radix2Plan(std::size_t n) : n_(n), rev_(n), twiddle_(n / 2) {
        std::size_t bits = 0;
        while ((std::size_t{1} << bits) < n) ++bits;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
            rev_[i] = r;
        }
        for (std::size_t k = 0; k < n / 2; ++k) {
            const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            twiddle_[k] = {static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a))};
        }
    }

    // Forward transform in place.
    void run(std::complex<T>* x) const {
        for (std::size_t i = 0; i < n_; ++i) {
            if (i < rev_[i]) std::swap(x[i], x[rev_[i]]);
        }
        for (std::size_t len = 2; len <= n_; len <<= 1) {
            const std::size_t half = len / 2;
            const std::size_t step = n_ / len;
            for (std::size_t s = 0; s < n_; s += len) {
                for (std::size_t j = 0; j < half; ++j) {
                    const std::complex<T> w = twiddle_[j * step];
                    const std::complex<T> u = x[s + j];
                    const std::complex<T> v = x[s + j + half] * w;
                    x[s + j] = u + v;
                    x[s + j + half] = u - v;
                }
            }
        }
    }

private:
    std::size_t n_;
    std::vector<std::size_t> rev_;
    std::vector<std::complex<T>> twiddle_;
};

template <typename T>
class BluesteinPlan {
public:
    explicit BluesteinPlan(std::size_t n) : n_(n), m_(next_pow2(2 * n - 1)), inner_(m_), chirp_(n), kernel_(m_) {
        // chirp_j = exp(-i pi j^2 / n); j^2 reduced mod 2n keeps the angle small.
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t q = (j * j) % (2 * n);
            const double a = -std::numbers::pi * static_cast<double>(q) / static_cast<double>(n);
            chirp_[j] = {static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a))};
        }
        kernel_[0] = std::conj(chirp_[0]);
        for (std::size_t j = 1; j < n; ++j) {
            kernel_[j] = std::conj(chirp_[j]);
            kernel_[m_ - j] = std::conj(chirp_[j]);
        }
        inner_.run(kernel_.data());
    }

    void run(std::complex<T>* x) const {
        std::vector<std::complex<T>> a(m_);
        for (std::size_t j = 0; j < n_; ++j) a[j] = x[j] * chirp_[j];
        inner_.run(a.data());
        for (std::size_t j = 0; j < m_; ++j) a[j] *= kernel_[j];
        // Inverse of length m via conjugation.
        for (auto& v : a) v = std::conj(v);
        inner_.run(a.data());
        const T inv_m = T{1} / static_cast<T>(m_);
        for (std::size_t k = 0; k < n_; ++k) x[k] = std::conj(a[k]) * inv_m * chirp_[k];
    }

private:
    std::size_t n_;
    std::size_t m_;
    Radix2Plan<T> inner_;
    std::vector<std::complex<T>> chirp_;
    std::vector<std::complex<T>> kernel_;
};

template <typename T>
class FftPlan {
public:
    explicit FftPlan(std::size_t n) : n_(n) {
        if (is_pow2(n)) {
            radix2_ = std::make_unique<Radix2Plan<T>>(n);
        } else {
            bluestein_ = std::make_unique<BluesteinPlan<T>>(n);
        }
    }

    void forward(std::complex<T>* x) const {
        if (n_ == 1) return;
        if (radix2_) {
            radix2_->run(x);
        } else {
            bluestein_->run(x);
        }
    }

private:
    std::size_t n_;
    std::unique_ptr<Radix2Plan<T>> radix2_;
    std::unique_ptr<BluesteinPlan<T>> bluestein_;
};

template <typename T>
const FftPlan<T>& plan_for(std::size_t n) {
    thread_local std::map<std::size_t, std::unique_ptr<FftPlan<T>>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, std::make_unique<FftPlan<T>>(n)).first;
    return *it->second;
}

// Forward 2D transform of each channel in place; inverse is done by the
// callers through conjugation.
template <typename T>
void fft2_inplace(ComplexGrid<T>& grid) {
    const std::size_t h = grid.height, w = grid.width, d = grid.depth;
    const FftPlan<T>& row_plan = plan_for<T>(w);
    const FftPlan<T>& col_plan = plan_for<T>(h);
    std::vector<std::complex<T>> buf(std::max(h, w));
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t u = 0; u < h; ++u) {
            for (std::size_t v = 0; v < w; ++v) {
                const std::size_t i = grid.index(u, v, c);
                buf[v] = {grid.re[i], grid.im[i]};
            }
            row_plan.forward(buf.data());
            for (std::size_t v = 0; v < w; ++v) {
                const std::size_t i = grid.index(u, v, c);
                grid.re[i] = buf[v].real();
                grid.im[i] = buf[v].imag();
            }
        }
        for (std::size_t v = 0; v < w; ++v) {
            for (std::size_t u = 0; u < h; ++u) {
                const std::size_t i = grid.index(u, v, c);
                buf[u] = {grid.re[i], grid.im[i]};
            }
            col_plan.forward(buf.data());
            for (std::size_t u = 0; u < h; ++u) {
                const std::size_t i = grid.index(u, v, c);
                grid.re[i] = buf[u].real();
                grid.im[i] = buf[u].imag();
            }
        }
    }
}

template <typename T>
void ifft2_inplace(ComplexGrid<T>& grid) {
    for (T& v : grid.im) v = -v;
    fft2_inplace(grid);
    const T inv = T{1} / static_cast<T>(grid.height * grid.width);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        grid.re[i] *= inv;
        grid.im[i] = -grid.im[i] * inv;
    }
}

// Returns (H, W, D) for x given the filter grid, validating sizes.
template <typename T>
void check_filter_input(const Shape& xs, const Shape& ks) {
    if (ks.size() != 3) throw DimensionError("global_filter: filter must be [H,W,D], got " + shape_str(ks));
    const bool grid3 = xs.size() == 3 && xs == ks;
    const bool flat = xs.size() == 2 && xs[0] == ks[0] * ks[1] && xs[1] == ks[2];
    if (!grid3 && !flat) {
        throw DimensionError("global_filter: input " + shape_str(xs) + " does not match filter " + shape_str(ks));
    }
}

template <typename T>
ComplexGrid<T> real_grid(const Tensor<T>& x, std::size_t h, std::size_t w, std::size_t d) {
    ComplexGrid<T> g(h, w, d);
    std::copy(x.values().begin(), x.values().end(), g.re.begin());
    return g;
}

}  // namespace

template <typename T>
void fft1d(std::vector<std::complex<T>>& data, bool inverse) {
    if (data.empty()) return;
    const FftPlan<T>& plan = plan_for<T>(data.size());
    if (!inverse) {
        plan.forward(data.data());
        return;
    }
    for (auto& v : data) v = std::conj(v);
    plan.forward(data.data());
    const T inv = T{1} / static_cast<T>(data.size());
    for (auto& v : data) v = std::conj(v) * inv;
}

template <typename T>
ComplexGrid<T> fft2(const Tensor<T>& grid) {
    if (grid.rank() != 3) throw DimensionError("fft2: expected [H,W,D], got " + shape_str(grid.shape()));
    ComplexGrid<T> out = real_grid(grid, grid.dim(0), grid.dim(1), grid.dim(2));
    fft2_inplace(out);
    return out;
}

template <typename T>
ComplexGrid<T> fft2(const ComplexGrid<T>& grid) {
    ComplexGrid<T> out = grid;
    fft2_inplace(out);
    return out;
}

template <typename T>
ComplexGrid<T> ifft2_complex(const ComplexGrid<T>& spectrum) {
    ComplexGrid<T> out = spectrum;
    ifft2_inplace(out);
    return out;
}

template <typename T>
Tensor<T> ifft2(const ComplexGrid<T>& spectrum) {
    ComplexGrid<T> full = ifft2_complex(spectrum);
    return Tensor<T>(spectrum.shape(), std::move(full.re));
}

template <typename T>
ComplexGrid<T> hermitian_symmetrize(const ComplexGrid<T>& k) {
    ComplexGrid<T> out(k.height, k.width, k.depth);
    for (std::size_t u = 0; u < k.height; ++u) {
        const std::size_t mu = (k.height - u) % k.height;
        for (std::size_t v = 0; v < k.width; ++v) {
            const std::size_t mv = (k.width - v) % k.width;
            for (std::size_t c = 0; c < k.depth; ++c) {
                const std::size_t i = k.index(u, v, c);
                const std::size_t j = k.index(mu, mv, c);
                out.re[i] = T{0.5} * (k.re[i] + k.re[j]);
                out.im[i] = T{0.5} * (k.im[i] - k.im[j]);
            }
        }
    }
    return out;
}

template <typename T>
ComplexGrid<T> global_filter_complex(const Tensor<T>& x, const ComplexGrid<T>& k) {
    check_filter_input<T>(x.shape(), k.shape());
    ComplexGrid<T> spec = real_grid(x, k.height, k.width, k.depth);
    fft2_inplace(spec);
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const std::complex<T> z = std::complex<T>(spec.re[i], spec.im[i]) * std::complex<T>(k.re[i], k.im[i]);
        spec.re[i] = z.real();
        spec.im[i] = z.imag();
    }
    ifft2_inplace(spec);
    return spec;
}

template <typename T>
Tensor<T> global_filter(const Tensor<T>& x, const ComplexGrid<T>& k) {
    ComplexGrid<T> full = global_filter_complex(x, k);
    return Tensor<T>(x.shape(), std::move(full.re));
}

template <typename T>
Var<T> global_filter(Graph<T>& g, const Var<T>& x, const Var<T>& k_re, const Var<T>& k_im) {
    if (k_re.shape() != k_im.shape()) {
        throw DimensionError("global_filter: filter parts differ " + shape_str(k_re.shape()) + " vs " +
                             shape_str(k_im.shape()));
    }
    check_filter_input<T>(x.shape(), k_re.shape());
    const std::size_t h = k_re.shape()[0], w = k_re.shape()[1], d = k_re.shape()[2];

    ComplexGrid<T> spec = real_grid(x.value(), h, w, d);
    fft2_inplace(spec);
    ComplexGrid<T> filtered = spec;
    const T* kr = k_re.value().data();
    const T* ki = k_im.value().data();
    for (std::size_t i = 0; i < spec.size(); ++i) {
        filtered.re[i] = spec.re[i] * kr[i] - spec.im[i] * ki[i];
        filtered.im[i] = spec.re[i] * ki[i] + spec.im[i] * kr[i];
    }
    ifft2_inplace(filtered);
    Tensor<T> out(x.shape(), std::move(filtered.re));

    return g.record(std::move(out), {&x, &k_re, &k_im},
                    [x, k_re, k_im, spec = std::move(spec), h, w, d](const Tensor<T>& gy) {
                        // G = ifft2(gy); dK_re = Re(X G), dK_im = -Im(X G), dx = Re(fft2(K G)).
                        ComplexGrid<T> gg = real_grid(gy, h, w, d);
                        ifft2_inplace(gg);
                        Var<T> xr = x, kre = k_re, kim = k_im;
                        if (kre.requires_grad() || kim.requires_grad()) {
                            T* dre = kre.requires_grad() ? kre.ensure_grad().data() : nullptr;
                            T* dim = kim.requires_grad() ? kim.ensure_grad().data() : nullptr;
                            for (std::size_t i = 0; i < gg.size(); ++i) {
                                const T pr = spec.re[i] * gg.re[i] - spec.im[i] * gg.im[i];
                                const T pi = spec.re[i] * gg.im[i] + spec.im[i] * gg.re[i];
                                if (dre) dre[i] += pr;
                                if (dim) dim[i] -= pi;
                            }
                        }
                        if (!xr.requires_grad()) return;
                        const T* kr2 = k_re.value().data();
                        const T* ki2 = k_im.value().data();
                        for (std::size_t i = 0; i < gg.size(); ++i) {
                            const T r = kr2[i] * gg.re[i] - ki2[i] * gg.im[i];
                            const T im = kr2[i] * gg.im[i] + ki2[i] * gg.re[i];
                            gg.re[i] = r;
                            gg.im[i] = im;
                        }
                        fft2_inplace(gg);
                        Tensor<T>& gx = xr.ensure_grad();
                        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gg.re[i];
                    });
}

#define SF2F_INSTANTIATE(T)                                                                       \
    template void fft1d<T>(std::vector<std::complex<T>>&, bool);                                  \
    template ComplexGrid<T> fft2<T>(const Tensor<T>&);                                            \
    template ComplexGrid<T> fft2<T>(const ComplexGrid<T>&);                                       \
    template ComplexGrid<T> ifft2_complex<T>(const ComplexGrid<T>&);                              \
    template Tensor<T> ifft2<T>(const ComplexGrid<T>&);                                           \
    template ComplexGrid<T> hermitian_symmetrize<T>(const ComplexGrid<T>&);                       \
    template ComplexGrid<T> global_filter_complex<T>(const Tensor<T>&, const ComplexGrid<T>&);    \
    template Tensor<T> global_filter<T>(const Tensor<T>&, const ComplexGrid<T>&);                 \
    template Var<T> global_filter<T>(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&);

SF2F_INSTANTIATE(float)
SF2F_INSTANTIATE(double)

#undef SF2F_INSTANTIATE

}  // namespace sf2f
