#include "sf2f/vit.hpp"

#include <cmath>

namespace sf2f {

void VitConfig::validate() const {
    if (patch == 0 || image_height % patch != 0 || image_width % patch != 0) {
        throw DimensionError("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                             " is not divisible by patch size " + std::to_string(patch));
    }
    if (heads == 0 || dim % heads != 0) {
        throw DimensionError("embedding dim " + std::to_string(dim) + " is not divisible by " +
                             std::to_string(heads) + " heads");
    }
    if (channels == 0 || depth == 0 || hidden_dim() == 0) throw DimensionError("ViT config has a zero extent");
}

template <typename T>
VitParams<T> make_vit_params(ParameterStore<T>& store, const VitConfig& cfg, Rng& rng, const std::string& prefix) {
    cfg.validate();
    VitParams<T> p;
    p.patch_proj = &store.add(prefix + ".patch_embed.weight", trunc_normal<T>({cfg.patch_dim(), cfg.dim}, 0.02, rng));
    p.pos_embed = &store.add(prefix + ".pos_embed", trunc_normal<T>({cfg.num_tokens(), cfg.dim}, 0.02, rng));
    p.cls_token = &store.add(prefix + ".cls_token", trunc_normal<T>({1, cfg.dim}, 0.02, rng));
    for (std::size_t l = 0; l < cfg.depth; ++l) {
        const std::string base = prefix + ".layers." + std::to_string(l);
        EncoderLayerParams<T> layer;
        layer.norm1 = make_layer_norm(store, base + ".norm1", cfg.dim);
        layer.query = make_linear(store, base + ".attn.query", cfg.dim, cfg.dim, rng);
        layer.key = make_linear(store, base + ".attn.key", cfg.dim, cfg.dim, rng);
        layer.value = make_linear(store, base + ".attn.value", cfg.dim, cfg.dim, rng);
        layer.proj = make_linear(store, base + ".attn.proj", cfg.dim, cfg.dim, rng);
        layer.norm2 = make_layer_norm(store, base + ".norm2", cfg.dim);
        layer.mlp = make_mlp(store, base + ".mlp", cfg.dim, cfg.hidden_dim(), rng);
        p.layers.push_back(layer);
    }
    p.final_norm = make_layer_norm(store, prefix + ".norm", cfg.dim);
    return p;
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch) {
    if (image.rank() != 3) throw DimensionError("patchify: expected [H,W,C] image, got " + shape_str(image.shape()));
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (patch == 0 || h % patch != 0 || w % patch != 0) {
        throw DimensionError("patchify: image " + shape_str(image.shape()) + " not divisible by patch " +
                             std::to_string(patch));
    }
    const std::size_t gh = h / patch, gw = w / patch, row = patch * patch * c;
    Tensor<T> out({gh * gw, row});
    for (std::size_t py = 0; py < gh; ++py) {
        for (std::size_t px = 0; px < gw; ++px) {
            T* dst = out.data() + (py * gw + px) * row;
            for (std::size_t y = 0; y < patch; ++y) {
                const T* src = image.data() + ((py * patch + y) * w + px * patch) * c;
                std::copy_n(src, patch * c, dst + y * patch * c);
            }
        }
    }
    return out;
}

template <typename T>
Var<T> vit_embed(Graph<T>& g, const Tensor<T>& patches, const VitParams<T>& params) {
    const Var<T>& proj = params.patch_proj->var;
    if (patches.rank() != 2 || patches.dim(1) != proj.shape()[0]) {
        throw DimensionError("vit_embed: patches " + shape_str(patches.shape()) + " vs projection " +
                             shape_str(proj.shape()));
    }
    if (patches.dim(0) + 1 != params.pos_embed->value().dim(0)) {
        throw DimensionError("vit_embed: " + std::to_string(patches.dim(0)) + " patches but position table " +
                             shape_str(params.pos_embed->value().shape()));
    }
    Var<T> tokens = matmul(g, Var<T>::leaf(patches), proj);
    Var<T> z = concat_rows(g, params.cls_token->var, tokens);
    return add(g, z, params.pos_embed->var);
}

template <typename T>
Var<T> self_attention(Graph<T>& g, const Var<T>& x, const EncoderLayerParams<T>& layer, std::size_t heads,
                      AttentionTrace<T>* trace) {
    const std::size_t dim = x.shape()[1];
    const std::size_t hd = dim / heads;
    const T scale_factor = T{1} / std::sqrt(static_cast<T>(hd));
    Var<T> q = apply(g, layer.query, x);
    Var<T> k = apply(g, layer.key, x);
    Var<T> v = apply(g, layer.value, x);
    std::vector<Var<T>> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var<T> qh = slice_cols(g, q, h * hd, hd);
        Var<T> kh = slice_cols(g, k, h * hd, hd);
        Var<T> vh = slice_cols(g, v, h * hd, hd);
        Var<T> scores = scale(g, matmul(g, qh, transpose(g, kh)), scale_factor);
        Var<T> attn = softmax(g, scores, 1);
        if (trace) trace->push_back(attn.value());
        outs.push_back(matmul(g, attn, vh));
    }
    Var<T> merged = heads == 1 ? outs[0] : concat_last<T>(g, outs);
    return apply(g, layer.proj, merged);
}

template <typename T>
Var<T> encoder_layer(Graph<T>& g, const Var<T>& z, const EncoderLayerParams<T>& layer, std::size_t heads, T eps,
                     AttentionTrace<T>* trace) {
    if (z.value().rank() != 2) throw DimensionError("encoder_layer: expected [N,D], got " + shape_str(z.shape()));
    if (heads == 0 || z.shape()[1] % heads != 0) {
        throw DimensionError("encoder_layer: dim " + std::to_string(z.shape()[1]) + " not divisible by heads");
    }
    Var<T> attn = self_attention(g, apply(g, layer.norm1, z, eps), layer, heads, trace);
    Var<T> z_mid = add(g, attn, z);
    Var<T> mlp = apply(g, layer.mlp, apply(g, layer.norm2, z_mid, eps));
    return add(g, mlp, z_mid);
}

template <typename T>
Var<T> vit_encode(Graph<T>& g, const Var<T>& z0, const VitParams<T>& params, const VitConfig& cfg,
                  AttentionTrace<T>* trace) {
    const T eps = static_cast<T>(cfg.ln_eps);
    Var<T> z = z0;
    for (const auto& layer : params.layers) z = encoder_layer(g, z, layer, cfg.heads, eps, trace);
    return apply(g, params.final_norm, select_row(g, z, 0), eps);
}

template <typename T>
Var<T> vit_forward_patches(Graph<T>& g, const Tensor<T>& patches, const VitParams<T>& params, const VitConfig& cfg,
                           AttentionTrace<T>* trace) {
    return vit_encode(g, vit_embed(g, patches, params), params, cfg, trace);
}

template <typename T>
Var<T> vit_forward(Graph<T>& g, const Tensor<T>& image, const VitParams<T>& params, const VitConfig& cfg,
                   AttentionTrace<T>* trace) {
    cfg.validate();
    if (image.rank() != 3 || image.dim(0) != cfg.image_height || image.dim(1) != cfg.image_width ||
        image.dim(2) != cfg.channels) {
        throw DimensionError("vit_forward: image " + shape_str(image.shape()) + " does not match config [" +
                             std::to_string(cfg.image_height) + "," + std::to_string(cfg.image_width) + "," +
                             std::to_string(cfg.channels) + "]");
    }
    return vit_forward_patches(g, patchify(image, cfg.patch), params, cfg, trace);
}

#define SF2F_INSTANTIATE(T)                                                                                      \
    template VitParams<T> make_vit_params<T>(ParameterStore<T>&, const VitConfig&, Rng&, const std::string&);     \
    template Tensor<T> patchify<T>(const Tensor<T>&, std::size_t);                                                \
    template Var<T> vit_embed<T>(Graph<T>&, const Tensor<T>&, const VitParams<T>&);                               \
    template Var<T> self_attention<T>(Graph<T>&, const Var<T>&, const EncoderLayerParams<T>&, std::size_t,        \
                                      AttentionTrace<T>*);                                                        \
    template Var<T> encoder_layer<T>(Graph<T>&, const Var<T>&, const EncoderLayerParams<T>&, std::size_t, T,      \
                                     AttentionTrace<T>*);                                                         \
    template Var<T> vit_encode<T>(Graph<T>&, const Var<T>&, const VitParams<T>&, const VitConfig&,                \
                                  AttentionTrace<T>*);                                                            \
    template Var<T> vit_forward_patches<T>(Graph<T>&, const Tensor<T>&, const VitParams<T>&, const VitConfig&,    \
                                           AttentionTrace<T>*);                                                   \
    template Var<T> vit_forward<T>(Graph<T>&, const Tensor<T>&, const VitParams<T>&, const VitConfig&,            \
                                   AttentionTrace<T>*);

SF2F_INSTANTIATE(float)
SF2F_INSTANTIATE(double)

#undef SF2F_INSTANTIATE

}  // namespace sf2f
