#include "sf2f/nn.hpp"

#include <cmath>
#include <numbers>

namespace sf2f {

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Tensor<T> init) {
    if (find(name)) throw Error("duplicate parameter name '" + name + "'");
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->momentum = Tensor<T>(init.shape());
    p->var = Var<T>::leaf(std::move(init), true);
    params_.push_back(std::move(p));
    return *params_.back();
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(std::string_view name) {
    for (auto& p : params_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(std::string_view name) const {
    for (const auto& p : params_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(std::string_view name) {
    Parameter<T>* p = find(name);
    if (!p) throw Error("unknown parameter '" + std::string(name) + "'");
    return *p;
}

template <typename T>
std::size_t ParameterStore<T>::total_elements() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value().size();
    return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
    for (auto& p : params_) p->var.ensure_grad().fill(T{0});
}

template <typename T>
std::vector<Tensor<T>> ParameterStore<T>::snapshot() const {
    std::vector<Tensor<T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p->value());
    return out;
}

template <typename T>
void ParameterStore<T>::restore(const std::vector<Tensor<T>>& values) {
    if (values.size() != params_.size()) throw Error("restore: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].shape() != params_[i]->value().shape()) {
            throw DimensionError("restore: shape mismatch for '" + params_[i]->name + "'");
        }
        params_[i]->mutable_value() = values[i];
    }
}

template <typename T>
Tensor<T> trunc_normal(Shape shape, double stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (T& v : t.values()) {
        double z;
        do {
            z = dist(rng);
        } while (std::abs(z) > 2.0);
        v = static_cast<T>(z * stddev);
    }
    return t;
}

template <typename T>
Tensor<T> normal(Shape shape, double stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (T& v : t.values()) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
void sgd_momentum_step(ParameterStore<T>& params, const SgdOptions& opt) {
    if (!(opt.lr >= 0.0)) throw Error("sgd: learning rate must be non-negative");
    if (opt.momentum < 0.0 || opt.momentum >= 1.0) throw Error("sgd: momentum must lie in [0, 1)");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].var.has_grad()) {
            throw Error("sgd: parameter '" + params[i].name + "' has no gradient");
        }
    }
    double clip_scale = 1.0;
    if (opt.grad_clip > 0.0) {
        double sq = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            for (T gv : params[i].var.grad().values()) sq += static_cast<double>(gv) * gv;
        }
        const double norm = std::sqrt(sq);
        if (norm > opt.grad_clip) clip_scale = opt.grad_clip / norm;
    }
    const T lr = static_cast<T>(opt.lr);
    const T mu = static_cast<T>(opt.momentum);
    const T wd = static_cast<T>(opt.weight_decay);
    const T cs = static_cast<T>(clip_scale);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter<T>& p = params[i];
        Tensor<T>& value = p.mutable_value();
        const Tensor<T>& grad = p.var.grad();
        for (std::size_t j = 0; j < value.size(); ++j) {
            T gj = grad[j] * cs;
            if (wd != T{0}) gj += wd * value[j];
            p.momentum[j] = mu * p.momentum[j] + gj;
            value[j] -= lr * p.momentum[j];
        }
    }
}

double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min) {
    if (total_epochs <= 0) throw Error("cosine_lr: total_epochs must be positive");
    if (epoch < 0 || epoch > total_epochs) throw Error("cosine_lr: epoch out of range");
    if (lr_max < lr_min) throw Error("cosine_lr: lr_max must be >= lr_min");
    const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = splitmix64(base);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Tensor<float> trunc_normal<float>(Shape, double, Rng&);
template Tensor<double> trunc_normal<double>(Shape, double, Rng&);
template Tensor<float> normal<float>(Shape, double, Rng&);
template Tensor<double> normal<double>(Shape, double, Rng&);
template void sgd_momentum_step<float>(ParameterStore<float>&, const SgdOptions&);
template void sgd_momentum_step<double>(ParameterStore<double>&, const SgdOptions&);

}  // namespace sf2f
