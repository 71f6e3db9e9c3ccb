#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sf2f/autodiff.hpp"

namespace sf2f {

/// A named trainable tensor plus its momentum buffer.
template <typename T>
struct Parameter {
    std::string name;
    Var<T> var;
    Tensor<T> momentum;

    const Tensor<T>& value() const { return var.value(); }
    Tensor<T>& mutable_value() { return var.mutable_value(); }
};

/// Owns parameters in registration order. Addresses are stable for the
/// lifetime of the store, including across moves.
template <typename T>
class ParameterStore {
public:
    ParameterStore() = default;
    ParameterStore(ParameterStore&&) noexcept = default;
    ParameterStore& operator=(ParameterStore&&) noexcept = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;

    Parameter<T>& add(std::string name, Tensor<T> init);

    Parameter<T>* find(std::string_view name);
    const Parameter<T>* find(std::string_view name) const;
    Parameter<T>& at(std::string_view name);

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t total_elements() const;

    Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
    const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

    void zero_grad();

    /// Copies of all parameter values, in registration order.
    std::vector<Tensor<T>> snapshot() const;
    void restore(const std::vector<Tensor<T>>& values);

private:
    std::vector<std::unique_ptr<Parameter<T>>> params_;
};

/// Seeded source for initializers and augmentation.
using Rng = std::mt19937_64;

/// Normal(0, std) truncated to [-2 std, 2 std] by rejection.
template <typename T>
Tensor<T> trunc_normal(Shape shape, double stddev, Rng& rng);

/// Normal(0, std), untruncated.
template <typename T>
Tensor<T> normal(Shape shape, double stddev, Rng& rng);

struct SgdOptions {
    double lr = 1e-3;
    double momentum = 0.9;
    double weight_decay = 0.0;  // off unless requested
    double grad_clip = 0.0;     // global L2 norm bound, off when 0
};

/// Classic momentum: v <- momentum * v + grad; p <- p - lr * v.
/// Throws if any parameter lacks a gradient buffer.
template <typename T>
void sgd_momentum_step(ParameterStore<T>& params, const SgdOptions& opt);

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * epoch / total)) / 2.
double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min);

/// Mixes a base seed with stream identifiers into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace sf2f
