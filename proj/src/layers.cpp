#include "sf2f/layers.hpp"

namespace sf2f {

template <typename T>
LinearRef<T> make_linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                         Rng& rng, bool with_bias) {
    LinearRef<T> ref;
    ref.weight = &store.add(name + ".weight", trunc_normal<T>({in, out}, 0.02, rng));
    if (with_bias) ref.bias = &store.add(name + ".bias", Tensor<T>({out}));
    return ref;
}

template <typename T>
LayerNormRef<T> make_layer_norm(ParameterStore<T>& store, const std::string& name, std::size_t dim) {
    LayerNormRef<T> ref;
    ref.gamma = &store.add(name + ".gamma", Tensor<T>({dim}, T{1}));
    ref.beta = &store.add(name + ".beta", Tensor<T>({dim}));
    return ref;
}

template <typename T>
MlpRef<T> make_mlp(ParameterStore<T>& store, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng) {
    MlpRef<T> ref;
    ref.fc1 = make_linear(store, name + ".fc1", dim, hidden, rng);
    ref.fc2 = make_linear(store, name + ".fc2", hidden, dim, rng);
    return ref;
}

template LinearRef<float> make_linear(ParameterStore<float>&, const std::string&, std::size_t, std::size_t, Rng&, bool);
template LinearRef<double> make_linear(ParameterStore<double>&, const std::string&, std::size_t, std::size_t, Rng&, bool);
template LayerNormRef<float> make_layer_norm(ParameterStore<float>&, const std::string&, std::size_t);
template LayerNormRef<double> make_layer_norm(ParameterStore<double>&, const std::string&, std::size_t);
template MlpRef<float> make_mlp(ParameterStore<float>&, const std::string&, std::size_t, std::size_t, Rng&);
template MlpRef<double> make_mlp(ParameterStore<double>&, const std::string&, std::size_t, std::size_t, Rng&);

}  // namespace sf2f
