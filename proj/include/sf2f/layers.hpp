#pragma once

#include <string>

#include "sf2f/nn.hpp"

namespace sf2f {

template <typename T>
struct LinearRef {
    Parameter<T>* weight = nullptr;  // [in, out]
    Parameter<T>* bias = nullptr;    // [out], optional
};

template <typename T>
struct LayerNormRef {
    Parameter<T>* gamma = nullptr;
    Parameter<T>* beta = nullptr;
};

template <typename T>
struct MlpRef {
    LinearRef<T> fc1;
    LinearRef<T> fc2;
};

// Weights ~ truncated normal(0.02), biases zero.
template <typename T>
LinearRef<T> make_linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                         Rng& rng, bool with_bias = true);

// gamma = 1, beta = 0.
template <typename T>
LayerNormRef<T> make_layer_norm(ParameterStore<T>& store, const std::string& name, std::size_t dim);

template <typename T>
MlpRef<T> make_mlp(ParameterStore<T>& store, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng);

template <typename T>
Var<T> apply(Graph<T>& g, const LinearRef<T>& layer, const Var<T>& x) {
    return linear(g, x, layer.weight->var, layer.bias ? layer.bias->var : Var<T>{});
}

template <typename T>
Var<T> apply(Graph<T>& g, const LayerNormRef<T>& ln, const Var<T>& x, T eps) {
    return layer_norm(g, x, ln.gamma->var, ln.beta->var, eps);
}

/// fc2(gelu(fc1(x)))
template <typename T>
Var<T> apply(Graph<T>& g, const MlpRef<T>& mlp, const Var<T>& x) {
    return apply(g, mlp.fc2, gelu(g, apply(g, mlp.fc1, x)));
}

}  // namespace sf2f
