#pragma once

#include <vector>

#include "sf2f/layers.hpp"
#include "sf2f/spectral.hpp"

namespace sf2f {

struct GfConfig {
    std::size_t image_height = 224;
    std::size_t image_width = 224;
    std::size_t patch = 16;
    std::size_t channels = 1;
    std::size_t dim = 512;
    std::size_t depth = 19;
    double mlp_ratio = 4.0;
    double ln_eps = 1e-6;
    double filter_init_std = 0.01;

    std::size_t grid_height() const { return image_height / patch; }
    std::size_t grid_width() const { return image_width / patch; }
    std::size_t num_tokens() const { return grid_height() * grid_width(); }
    std::size_t patch_dim() const { return patch * patch * channels; }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(mlp_ratio * static_cast<double>(dim)); }

    void validate() const;
};

template <typename T>
struct GfBlockParams {
    LayerNormRef<T> norm1;
    Parameter<T>* filter_re = nullptr;  // K real part, [H', W', m]
    Parameter<T>* filter_im = nullptr;  // K imaginary part, [H', W', m]
    LayerNormRef<T> norm2;
    MlpRef<T> mlp;

    ComplexGrid<T> filter() const;
};

template <typename T>
struct GfnetParams {
    LinearRef<T> patch_embed;  // [P*P*C, m] + bias
    std::vector<GfBlockParams<T>> blocks;
    LayerNormRef<T> final_norm;
};

/// Filters start as small complex noise with the DC bin at 1 + 0i.
template <typename T>
GfnetParams<T> make_gfnet_params(ParameterStore<T>& store, const GfConfig& cfg, Rng& rng,
                                 const std::string& prefix = "gfnet");

/// Patch projection onto the token grid. Returns [H'*W', m], the [H', W', m]
/// grid in row-major order.
template <typename T>
Var<T> gf_embed(Graph<T>& g, const Tensor<T>& image, const GfnetParams<T>& params, const GfConfig& cfg);

/// tokens + MLP(LN2(GlobalFilter(LN1(tokens)))).
template <typename T>
Var<T> gf_block(Graph<T>& g, const Var<T>& tokens, const GfBlockParams<T>& block, T eps);

/// Mean over tokens of [N, m] -> [m].
template <typename T>
Var<T> global_average_pool(Graph<T>& g, const Var<T>& tokens);

/// Frequency feature: embed, M blocks, final LN, global average pooling. [m].
template <typename T>
Var<T> gfnet_forward(Graph<T>& g, const Tensor<T>& image, const GfnetParams<T>& params, const GfConfig& cfg);

}  // namespace sf2f
