#pragma once

#include <vector>

#include "sf2f/layers.hpp"

namespace sf2f {

struct VitConfig {
    std::size_t image_height = 224;
    std::size_t image_width = 224;
    std::size_t patch = 16;
    std::size_t channels = 1;
    std::size_t dim = 768;
    std::size_t depth = 12;
    std::size_t heads = 12;
    double mlp_ratio = 4.0;
    double ln_eps = 1e-6;

    std::size_t grid_height() const { return image_height / patch; }
    std::size_t grid_width() const { return image_width / patch; }
    std::size_t num_patches() const { return grid_height() * grid_width(); }
    std::size_t num_tokens() const { return num_patches() + 1; }
    std::size_t patch_dim() const { return patch * patch * channels; }
    std::size_t head_dim() const { return dim / heads; }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(mlp_ratio * static_cast<double>(dim)); }

    /// Throws DimensionError on non-divisible image/patch or dim/heads.
    void validate() const;
};

template <typename T>
struct EncoderLayerParams {
    LayerNormRef<T> norm1;
    LinearRef<T> query;
    LinearRef<T> key;
    LinearRef<T> value;
    LinearRef<T> proj;
    LayerNormRef<T> norm2;
    MlpRef<T> mlp;
};

template <typename T>
struct VitParams {
    Parameter<T>* patch_proj = nullptr;  // E: [P*P*C, D]
    Parameter<T>* pos_embed = nullptr;   // E_pos: [N+1, D]
    Parameter<T>* cls_token = nullptr;   // x_class: [1, D]
    std::vector<EncoderLayerParams<T>> layers;
    LayerNormRef<T> final_norm;
};

template <typename T>
VitParams<T> make_vit_params(ParameterStore<T>& store, const VitConfig& cfg, Rng& rng, const std::string& prefix = "vit");

/// Splits an [H, W, C] image into [N, P*P*C] rows. Patches are ordered
/// row-major over the grid; each row is the patch flattened as (y, x, c).
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch);

/// z0 = [x_class; patches * E] + E_pos.
template <typename T>
Var<T> vit_embed(Graph<T>& g, const Tensor<T>& patches, const VitParams<T>& params);

/// Per-head attention matrices collected during a forward pass, in
/// (layer, head) order.
template <typename T>
using AttentionTrace = std::vector<Tensor<T>>;

/// Multi-head scaled dot-product self-attention on [N, D] followed by the
/// output projection.
template <typename T>
Var<T> self_attention(Graph<T>& g, const Var<T>& x, const EncoderLayerParams<T>& layer, std::size_t heads,
                      AttentionTrace<T>* trace = nullptr);

/// z' = MSA(LN(z)) + z; z_out = MLP(LN(z')) + z'.
template <typename T>
Var<T> encoder_layer(Graph<T>& g, const Var<T>& z, const EncoderLayerParams<T>& layer, std::size_t heads, T eps,
                     AttentionTrace<T>* trace = nullptr);

/// Encoder stack from embedded tokens; returns LN of the class-token row.
template <typename T>
Var<T> vit_encode(Graph<T>& g, const Var<T>& z0, const VitParams<T>& params, const VitConfig& cfg,
                  AttentionTrace<T>* trace = nullptr);

template <typename T>
Var<T> vit_forward_patches(Graph<T>& g, const Tensor<T>& patches, const VitParams<T>& params, const VitConfig& cfg,
                           AttentionTrace<T>* trace = nullptr);

/// Spatial feature y = LN(z_L^0), shape [D].
template <typename T>
Var<T> vit_forward(Graph<T>& g, const Tensor<T>& image, const VitParams<T>& params, const VitConfig& cfg,
                   AttentionTrace<T>* trace = nullptr);

}  // namespace sf2f
