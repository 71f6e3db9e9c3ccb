#include "sf2f/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "gemm.hpp"

namespace sf2f {

namespace {

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

template <typename T>
void require_rank(const char* op, const Var<T>& x, std::size_t rank) {
    if (x.value().rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(x.shape()));
    }
}

// Adds `g` into the grad of `v` if it participates in differentiation.
template <typename T>
void accumulate(Var<T> v, const Tensor<T>& g) {
    if (!v.requires_grad()) return;
    Tensor<T>& dst = v.ensure_grad();
    T* d = dst.data();
    const T* s = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph

template <typename T>
Var<T> Graph<T>::push(Tensor<T> value, bool needs_grad, std::function<void(const Tensor<T>&)> fn) {
    if (!value.all_finite()) {
        throw NumericalError("non-finite value produced by forward op with output shape " +
                             shape_str(value.shape()));
    }
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    if (needs_grad) {
        node->requires_grad = true;
        node->backward = std::move(fn);
        tape_.push_back(node);
    }
    return Var<T>(std::move(node));
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
                        std::function<void(const Tensor<T>&)> fn) {
    bool needs = false;
    if (enabled_) {
        for (const Var<T>* v : inputs) needs = needs || (*v && v->requires_grad());
    }
    return push(std::move(value), needs, std::move(fn));
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, std::span<const Var<T>> inputs,
                        std::function<void(const Tensor<T>&)> fn) {
    bool needs = false;
    if (enabled_) {
        for (const Var<T>& v : inputs) needs = needs || v.requires_grad();
    }
    return push(std::move(value), needs, std::move(fn));
}

template <typename T>
void Graph<T>::backward(const Var<T>& loss) {
    if (consumed_) throw Error("backward called twice on the same graph; record a new forward pass");
    if (loss.value().size() != 1) {
        throw DimensionError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    consumed_ = true;
    if (!loss.requires_grad()) return;
    Var<T> seed = loss;
    seed.ensure_grad()[0] += T{1};
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        Node<T>& node = **it;
        if (node.grad.empty() || !node.backward) continue;
        node.backward(node.grad);
        node.backward = nullptr;
    }
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
    require_same_shape("add", a, b);
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return g.record(std::move(out), {&a, &b}, [a, b](const Tensor<T>& gy) {
        accumulate(a, gy);
        accumulate(b, gy);
    });
}

template <typename T>
Var<T> sub(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
    require_same_shape("sub", a, b);
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return g.record(std::move(out), {&a, &b}, [a, b](const Tensor<T>& gy) {
        accumulate(a, gy);
        if (b.requires_grad()) {
            Var<T> bb = b;
            Tensor<T>& gb = bb.ensure_grad();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
        }
    });
}

template <typename T>
Var<T> mul(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
    require_same_shape("mul", a, b);
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return g.record(std::move(out), {&a, &b}, [a, b](const Tensor<T>& gy) {
        Var<T> aa = a, bb = b;
        if (aa.requires_grad()) {
            Tensor<T>& ga = aa.ensure_grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * b.value()[i];
        }
        if (bb.requires_grad()) {
            Tensor<T>& gb = bb.ensure_grad();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * a.value()[i];
        }
    });
}

template <typename T>
Var<T> scale(Graph<T>& g, const Var<T>& x, T factor) {
    Tensor<T> out = x.value();
    for (T& v : out.values()) v *= factor;
    return g.record(std::move(out), {&x}, [x, factor](const Tensor<T>& gy) {
        Var<T> xx = x;
        if (!xx.requires_grad()) return;
        Tensor<T>& gx = xx.ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gy[i];
    });
}

template <typename T>
Var<T> add_bias(Graph<T>& g, const Var<T>& x, const Var<T>& bias) {
    require_rank("add_bias", bias, 1);
    const std::size_t d = bias.value().size();
    if (x.value().rank() == 0 || x.shape().back() != d) {
        throw DimensionError("add_bias: last axis of " + shape_str(x.shape()) + " does not match bias " +
                             shape_str(bias.shape()));
    }
    Tensor<T> out = x.value();
    const std::size_t rows = out.size() / d;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bias.value()[j];
    }
    return g.record(std::move(out), {&x, &bias}, [x, bias, rows, d](const Tensor<T>& gy) {
        accumulate(x, gy);
        Var<T> bb = bias;
        if (!bb.requires_grad()) return;
        Tensor<T>& gb = bb.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) gb[j] += gy[r * d + j];
        }
    });
}

template <typename T>
Var<T> sum(Graph<T>& g, const Var<T>& x) {
    T s{0};
    for (T v : x.value().values()) s += v;
    return g.record(Tensor<T>::scalar(s), {&x}, [x](const Tensor<T>& gy) {
        Var<T> xx = x;
        if (!xx.requires_grad()) return;
        Tensor<T>& gx = xx.ensure_grad();
        for (T& v : gx.values()) v += gy[0];
    });
}

template <typename T>
Var<T> mean(Graph<T>& g, const Var<T>& x) {
    return scale(g, sum(g, x), T{1} / static_cast<T>(x.value().size()));
}

// ---------------------------------------------------------------------------
// Products

template <typename T>
Var<T> matmul(Graph<T>& g, const Var<T>& a, const Var<T>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    auto mismatch = [&] {
        return DimensionError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    };
    if (sa.size() < 2 || sb.size() < 2 || sa.size() > 3 || sb.size() > 3) throw mismatch();
    const std::size_t m = sa[sa.size() - 2], k = sa.back();
    const std::size_t kb = sb[sb.size() - 2], n = sb.back();
    if (k != kb) throw mismatch();
    const std::size_t ba = sa.size() == 3 ? sa[0] : 1;
    const std::size_t bb = sb.size() == 3 ? sb[0] : 1;
    if (ba != bb && ba != 1 && bb != 1) throw mismatch();
    const std::size_t batch = std::max(ba, bb);
    const bool batched = sa.size() == 3 || sb.size() == 3;

    Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
    Tensor<T> out(out_shape);
    const std::size_t a_stride = ba == 1 ? 0 : m * k;
    const std::size_t b_stride = bb == 1 ? 0 : k * n;
    for (std::size_t i = 0; i < batch; ++i) {
        detail::gemm_nn(m, n, k, a.value().data() + i * a_stride, b.value().data() + i * b_stride,
                        out.data() + i * m * n);
    }
    return g.record(std::move(out), {&a, &b},
                    [a, b, batch, m, n, k, a_stride, b_stride](const Tensor<T>& gy) {
                        Var<T> aa = a, bbv = b;
                        if (aa.requires_grad()) {
                            Tensor<T>& ga = aa.ensure_grad();
                            for (std::size_t i = 0; i < batch; ++i) {
                                detail::gemm_nt(m, k, n, gy.data() + i * m * n,
                                                b.value().data() + i * b_stride, ga.data() + i * a_stride);
                            }
                        }
                        if (bbv.requires_grad()) {
                            Tensor<T>& gb = bbv.ensure_grad();
                            for (std::size_t i = 0; i < batch; ++i) {
                                detail::gemm_tn(k, n, m, a.value().data() + i * a_stride,
                                                gy.data() + i * m * n, gb.data() + i * b_stride);
                            }
                        }
                    });
}

template <typename T>
Var<T> transpose(Graph<T>& g, const Var<T>& x) {
    require_rank("transpose", x, 2);
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    Tensor<T> out(Shape{c, r});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.value()[i * c + j];
    }
    return g.record(std::move(out), {&x}, [x, r, c](const Tensor<T>& gy) {
        Var<T> xx = x;
        if (!xx.requires_grad()) return;
        Tensor<T>& gx = xx.ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
        }
    });
}

template <typename T>
Var<T> linear(Graph<T>& g, const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
    require_rank("linear weight", weight, 2);
    const std::size_t in = weight.shape()[0], outd = weight.shape()[1];
    const Shape& sx = x.shape();
    if (sx.empty() || sx.size() > 2 || sx.back() != in) {
        throw DimensionError("linear: input " + shape_str(sx) + " incompatible with weight " +
                             shape_str(weight.shape()));
    }
    if (bias && (bias.value().rank() != 1 || bias.value().size() != outd)) {
        throw DimensionError("linear: bias " + shape_str(bias.shape()) + " incompatible with weight " +
                             shape_str(weight.shape()));
    }
    const std::size_t rows = sx.size() == 2 ? sx[0] : 1;
    Shape out_shape = sx.size() == 2 ? Shape{rows, outd} : Shape{outd};
    Tensor<T> out(out_shape);
    if (bias) {
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(bias.value().data(), bias.value().data() + outd, out.data() + r * outd);
        }
    }
    detail::gemm_nn(rows, outd, in, x.value().data(), weight.value().data(), out.data());

    return g.record(std::move(out), {&x, &weight, &bias}, [x, weight, bias, rows, in, outd](const Tensor<T>& gy) {
        Var<T> xx = x, ww = weight, bb = bias;
        if (xx.requires_grad()) {
            detail::gemm_nt(rows, in, outd, gy.data(), weight.value().data(), xx.ensure_grad().data());
        }
        if (ww.requires_grad()) {
            detail::gemm_tn(in, outd, rows, x.value().data(), gy.data(), ww.ensure_grad().data());
        }
        if (bb && bb.requires_grad()) {
            Tensor<T>& gb = bb.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < outd; ++j) gb[j] += gy[r * outd + j];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization and activations

template <typename T>
Var<T> layer_norm(Graph<T>& g, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
    if (!(eps > T{0})) throw Error("layer_norm: eps must be positive");
    require_rank("layer_norm gamma", gamma, 1);
    require_rank("layer_norm beta", beta, 1);
    const std::size_t d = gamma.value().size();
    if (x.value().rank() == 0 || x.shape().back() != d || beta.value().size() != d) {
        throw DimensionError("layer_norm: input " + shape_str(x.shape()) + " vs gamma " +
                             shape_str(gamma.shape()) + " / beta " + shape_str(beta.shape()));
    }
    const std::size_t rows = x.value().size() / d;
    Tensor<T> xhat(x.shape());
    Tensor<T> out(x.shape());
    std::vector<T> rstd(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.value().data() + r * d;
        T mu{0};
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<T>(d);
        T var{0};
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(d);
        const T rs = T{1} / std::sqrt(var + eps);
        rstd[r] = rs;
        for (std::size_t j = 0; j < d; ++j) {
            const T h = (xr[j] - mu) * rs;
            xhat[r * d + j] = h;
            out[r * d + j] = h * gamma.value()[j] + beta.value()[j];
        }
    }
    return g.record(std::move(out), {&x, &gamma, &beta},
                    [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), rows, d](const Tensor<T>& gy) {
                        Var<T> xx = x, gg = gamma, bb = beta;
                        if (gg.requires_grad() || bb.requires_grad()) {
                            Tensor<T>* gga = gg.requires_grad() ? &gg.ensure_grad() : nullptr;
                            Tensor<T>* gbe = bb.requires_grad() ? &bb.ensure_grad() : nullptr;
                            for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t j = 0; j < d; ++j) {
                                    if (gga) (*gga)[j] += gy[r * d + j] * xhat[r * d + j];
                                    if (gbe) (*gbe)[j] += gy[r * d + j];
                                }
                            }
                        }
                        if (!xx.requires_grad()) return;
                        Tensor<T>& gx = xx.ensure_grad();
                        std::vector<T> gh(d);
                        for (std::size_t r = 0; r < rows; ++r) {
                            T m1{0}, m2{0};
                            for (std::size_t j = 0; j < d; ++j) {
                                gh[j] = gy[r * d + j] * gamma.value()[j];
                                m1 += gh[j];
                                m2 += gh[j] * xhat[r * d + j];
                            }
                            m1 /= static_cast<T>(d);
                            m2 /= static_cast<T>(d);
                            for (std::size_t j = 0; j < d; ++j) {
                                gx[r * d + j] += rstd[r] * (gh[j] - m1 - xhat[r * d + j] * m2);
                            }
                        }
                    });
}

template <typename T>
Var<T> gelu(Graph<T>& g, const Var<T>& x) {
    Tensor<T> out(x.shape());
    const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.value()[i];
        out[i] = T{0.5} * v * (T{1} + std::erf(v * inv_sqrt2));
    }
    return g.record(std::move(out), {&x}, [x, inv_sqrt2](const Tensor<T>& gy) {
        Var<T> xx = x;
        if (!xx.requires_grad()) return;
        Tensor<T>& gx = xx.ensure_grad();
        const T inv_sqrt2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const T v = x.value()[i];
            const T cdf = T{0.5} * (T{1} + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt2pi * std::exp(T{-0.5} * v * v);
            gx[i] += gy[i] * (cdf + v * pdf);
        }
    });
}

template <typename T>
Var<T> softmax(Graph<T>& g, const Var<T>& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    Tensor<T> out(s);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            T mx = x.value()[base];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x.value()[base + j * inner]);
            T z{0};
            for (std::size_t j = 0; j < n; ++j) {
                const T e = std::exp(x.value()[base + j * inner] - mx);
                out[base + j * inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
        }
    }
    Tensor<T> saved = out;
    return g.record(std::move(out), {&x}, [x, y = std::move(saved), outer, inner, n](const Tensor<T>& gy) {
        Var<T> xx = x;
        if (!xx.requires_grad()) return;
        Tensor<T>& gx = xx.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * n * inner + in;
                T dotv{0};
                for (std::size_t j = 0; j < n; ++j) dotv += gy[base + j * inner] * y[base + j * inner];
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t idx = base + j * inner;
                    gx[idx] += y[idx] * (gy[idx] - dotv);
                }
            }
        }
    });
}

template <typename T>
Var<T> cross_entropy(Graph<T>& g, const Var<T>& logits, std::span<const int> labels) {
    require_rank("cross_entropy", logits, 2);
    const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
    if (labels.size() != batch) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                             shape_str(logits.shape()));
    }
    std::vector<int> lab(labels.begin(), labels.end());
    for (int l : lab) {
        if (l < 0 || static_cast<std::size_t>(l) >= classes) {
            throw DataError("cross_entropy: label " + std::to_string(l) + " out of range [0," +
                            std::to_string(classes) + ")");
        }
    }
    Tensor<T> probs(logits.shape());
    T loss{0};
    for (std::size_t b = 0; b < batch; ++b) {
        const T* row = logits.value().data() + b * classes;
        T mx = *std::max_element(row, row + classes);
        T z{0};
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
        const T logz = mx + std::log(z);
        for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] = std::exp(row[c] - logz);
        loss += logz - row[lab[b]];
    }
    loss /= static_cast<T>(batch);
    return g.record(Tensor<T>::scalar(loss), {&logits},
                    [logits, probs = std::move(probs), lab = std::move(lab), batch, classes](const Tensor<T>& gy) {
                        Var<T> ll = logits;
                        if (!ll.requires_grad()) return;
                        Tensor<T>& gl = ll.ensure_grad();
                        const T s = gy[0] / static_cast<T>(batch);
                        for (std::size_t b = 0; b < batch; ++b) {
                            for (std::size_t c = 0; c < classes; ++c) {
                                const T target = static_cast<int>(c) == lab[b] ? T{1} : T{0};
                                gl[b * classes + c] += s * (probs[b * classes + c] - target);
                            }
                        }
                    });
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Var<T> reshape(Graph<T>& g, const Var<T>& x, Shape shape) {
    Tensor<T> out = x.value().reshaped(std::move(shape));
    return g.record(std::move(out), {&x}, [x](const Tensor<T>& gy) {
        Var<T> xx = x;
        if (!xx.requires_grad()) return;
        Tensor<T>& gx = xx.ensure_grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    });
}

template <typename T>
Var<T> slice_cols(Graph<T>& g, const Var<T>& x, std::size_t start, std::size_t len) {
    require_rank("slice_cols", x, 2);
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    if (len == 0 || start + len > c) {
        throw DimensionError("slice_cols: columns [" + std::to_string(start) + "," + std::to_string(start + len) +
                             ") out of range for " + shape_str(x.shape()));
    }
    Tensor<T> out(Shape{r, len});
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(x.value().data() + i * c + start, len, out.data() + i * len);
    }
    return g.record(std::move(out), {&x}, [x, r, c, start, len](const Tensor<T>& gy) {
        Var<T> xx = x;
        if (!xx.requires_grad()) return;
        Tensor<T>& gx = xx.ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < len; ++j) gx[i * c + start + j] += gy[i * len + j];
        }
    });
}

template <typename T>
Var<T> concat_last(Graph<T>& g, std::span<const Var<T>> parts) {
    if (parts.empty()) throw DimensionError("concat_last: no inputs");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Var<T>& p : parts) {
        Shape l(p.shape().begin(), p.shape().end() - 1);
        if (p.value().rank() == 0 || l != lead) {
            throw DimensionError("concat_last: leading shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                                 shape_str(p.shape()));
        }
        widths.push_back(p.shape().back());
        total += p.shape().back();
    }
    const std::size_t rows = shape_numel(lead);
    Shape out_shape = lead;
    out_shape.push_back(total);
    Tensor<T> out(out_shape);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(parts[k].value().data() + r * widths[k], widths[k], out.data() + r * total + offset);
        }
        offset += widths[k];
    }
    std::vector<Var<T>> saved(parts.begin(), parts.end());
    return g.record(std::move(out), parts, [saved, widths, rows, total](const Tensor<T>& gy) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < saved.size(); ++k) {
            Var<T> p = saved[k];
            if (p.requires_grad()) {
                Tensor<T>& gp = p.ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < widths[k]; ++j) gp[r * widths[k] + j] += gy[r * total + off + j];
                }
            }
            off += widths[k];
        }
    });
}

template <typename T>
Var<T> concat_rows(Graph<T>& g, const Var<T>& top, const Var<T>& bottom) {
    require_rank("concat_rows", top, 2);
    require_rank("concat_rows", bottom, 2);
    if (top.shape()[1] != bottom.shape()[1]) {
        throw DimensionError("concat_rows: column mismatch " + shape_str(top.shape()) + " vs " +
                             shape_str(bottom.shape()));
    }
    const std::size_t nt = top.value().size();
    Tensor<T> out(Shape{top.shape()[0] + bottom.shape()[0], top.shape()[1]});
    std::copy_n(top.value().data(), nt, out.data());
    std::copy_n(bottom.value().data(), bottom.value().size(), out.data() + nt);
    return g.record(std::move(out), {&top, &bottom}, [top, bottom, nt](const Tensor<T>& gy) {
        Var<T> t = top, b = bottom;
        if (t.requires_grad()) {
            Tensor<T>& gt = t.ensure_grad();
            for (std::size_t i = 0; i < nt; ++i) gt[i] += gy[i];
        }
        if (b.requires_grad()) {
            Tensor<T>& gb = b.ensure_grad();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[nt + i];
        }
    });
}

template <typename T>
Var<T> select_row(Graph<T>& g, const Var<T>& x, std::size_t index) {
    require_rank("select_row", x, 2);
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    if (index >= r) throw DimensionError("select_row: row " + std::to_string(index) + " of " + shape_str(x.shape()));
    Tensor<T> out(Shape{c});
    std::copy_n(x.value().data() + index * c, c, out.data());
    return g.record(std::move(out), {&x}, [x, index, c](const Tensor<T>& gy) {
        Var<T> xx = x;
        if (!xx.requires_grad()) return;
        Tensor<T>& gx = xx.ensure_grad();
        for (std::size_t j = 0; j < c; ++j) gx[index * c + j] += gy[j];
    });
}

template <typename T>
Var<T> stack_rows(Graph<T>& g, std::span<const Var<T>> rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no inputs");
    const Shape& s0 = rows[0].shape();
    if (s0.size() != 1) throw DimensionError("stack_rows: expected rank-1 rows, got " + shape_str(s0));
    for (const Var<T>& r : rows) {
        if (r.shape() != s0) {
            throw DimensionError("stack_rows: row shape mismatch " + shape_str(s0) + " vs " + shape_str(r.shape()));
        }
    }
    const std::size_t n = s0[0];
    Tensor<T> out(Shape{rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(rows[i].value().data(), n, out.data() + i * n);
    std::vector<Var<T>> saved(rows.begin(), rows.end());
    return g.record(std::move(out), rows, [saved, n](const Tensor<T>& gy) {
        for (std::size_t i = 0; i < saved.size(); ++i) {
            Var<T> r = saved[i];
            if (!r.requires_grad()) continue;
            Tensor<T>& gr = r.ensure_grad();
            for (std::size_t j = 0; j < n; ++j) gr[j] += gy[i * n + j];
        }
    });
}

template <typename T>
Var<T> mean_rows(Graph<T>& g, const Var<T>& x) {
    require_rank("mean_rows", x, 2);
    const std::size_t r = x.shape()[0], c = x.shape()[1];
    Tensor<T> out(Shape{c});
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[j] += x.value()[i * c + j];
    }
    const T inv = T{1} / static_cast<T>(r);
    for (T& v : out.values()) v *= inv;
    return g.record(std::move(out), {&x}, [x, r, c, inv](const Tensor<T>& gy) {
        Var<T> xx = x;
        if (!xx.requires_grad()) return;
        Tensor<T>& gx = xx.ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j] * inv;
        }
    });
}

#define SF2F_INSTANTIATE(T)                                                                        \
    template class Graph<T>;                                                                       \
    template Var<T> add(Graph<T>&, const Var<T>&, const Var<T>&);                                  \
    template Var<T> sub(Graph<T>&, const Var<T>&, const Var<T>&);                                  \
    template Var<T> mul(Graph<T>&, const Var<T>&, const Var<T>&);                                  \
    template Var<T> scale(Graph<T>&, const Var<T>&, T);                                            \
    template Var<T> add_bias(Graph<T>&, const Var<T>&, const Var<T>&);                             \
    template Var<T> sum(Graph<T>&, const Var<T>&);                                                 \
    template Var<T> mean(Graph<T>&, const Var<T>&);                                                \
    template Var<T> matmul(Graph<T>&, const Var<T>&, const Var<T>&);                               \
    template Var<T> transpose(Graph<T>&, const Var<T>&);                                           \
    template Var<T> linear(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&);                \
    template Var<T> layer_norm(Graph<T>&, const Var<T>&, const Var<T>&, const Var<T>&, T);         \
    template Var<T> gelu(Graph<T>&, const Var<T>&);                                                \
    template Var<T> softmax(Graph<T>&, const Var<T>&, std::size_t);                                \
    template Var<T> cross_entropy(Graph<T>&, const Var<T>&, std::span<const int>);                 \
    template Var<T> reshape(Graph<T>&, const Var<T>&, Shape);                                      \
    template Var<T> slice_cols(Graph<T>&, const Var<T>&, std::size_t, std::size_t);                \
    template Var<T> concat_last(Graph<T>&, std::span<const Var<T>>);                               \
    template Var<T> concat_rows(Graph<T>&, const Var<T>&, const Var<T>&);                          \
    template Var<T> select_row(Graph<T>&, const Var<T>&, std::size_t);                             \
    template Var<T> stack_rows(Graph<T>&, std::span<const Var<T>>);                                \
    template Var<T> mean_rows(Graph<T>&, const Var<T>&);

SF2F_INSTANTIATE(float)
SF2F_INSTANTIATE(double)

#undef SF2F_INSTANTIATE

}  // namespace sf2f
