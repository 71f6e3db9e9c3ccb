#include "sf2f/gfnet.hpp"

#include "sf2f/vit.hpp"

namespace sf2f {

void GfConfig::validate() const {
    if (patch == 0 || image_height % patch != 0 || image_width % patch != 0) {
        throw DimensionError("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                             " is not divisible by patch size " + std::to_string(patch));
    }
    if (channels == 0 || dim == 0 || depth == 0 || hidden_dim() == 0) {
        throw DimensionError("GFNet config has a zero extent");
    }
}

template <typename T>
ComplexGrid<T> GfBlockParams<T>::filter() const {
    const Shape& s = filter_re->value().shape();
    ComplexGrid<T> k(s[0], s[1], s[2]);
    k.re = filter_re->value().storage();
    k.im = filter_im->value().storage();
    return k;
}

template <typename T>
GfnetParams<T> make_gfnet_params(ParameterStore<T>& store, const GfConfig& cfg, Rng& rng, const std::string& prefix) {
    cfg.validate();
    GfnetParams<T> p;
    p.patch_embed = make_linear(store, prefix + ".patch_embed", cfg.patch_dim(), cfg.dim, rng);
    const Shape grid{cfg.grid_height(), cfg.grid_width(), cfg.dim};
    for (std::size_t b = 0; b < cfg.depth; ++b) {
        const std::string base = prefix + ".blocks." + std::to_string(b);
        GfBlockParams<T> block;
        block.norm1 = make_layer_norm(store, base + ".norm1", cfg.dim);
        Tensor<T> re = normal<T>(grid, cfg.filter_init_std, rng);
        Tensor<T> im = normal<T>(grid, cfg.filter_init_std, rng);
        for (std::size_t c = 0; c < cfg.dim; ++c) {
            re[c] = T{1};
            im[c] = T{0};
        }
        block.filter_re = &store.add(base + ".filter.re", std::move(re));
        block.filter_im = &store.add(base + ".filter.im", std::move(im));
        block.norm2 = make_layer_norm(store, base + ".norm2", cfg.dim);
        block.mlp = make_mlp(store, base + ".mlp", cfg.dim, cfg.hidden_dim(), rng);
        p.blocks.push_back(block);
    }
    p.final_norm = make_layer_norm(store, prefix + ".norm", cfg.dim);
    return p;
}

template <typename T>
Var<T> gf_embed(Graph<T>& g, const Tensor<T>& image, const GfnetParams<T>& params, const GfConfig& cfg) {
    cfg.validate();
    if (image.rank() != 3 || image.dim(0) != cfg.image_height || image.dim(1) != cfg.image_width ||
        image.dim(2) != cfg.channels) {
        throw DimensionError("gf_embed: image " + shape_str(image.shape()) + " does not match config [" +
                             std::to_string(cfg.image_height) + "," + std::to_string(cfg.image_width) + "," +
                             std::to_string(cfg.channels) + "]");
    }
    return apply(g, params.patch_embed, Var<T>::leaf(patchify(image, cfg.patch)));
}

template <typename T>
Var<T> gf_block(Graph<T>& g, const Var<T>& tokens, const GfBlockParams<T>& block, T eps) {
    Var<T> mixed = global_filter(g, apply(g, block.norm1, tokens, eps), block.filter_re->var, block.filter_im->var);
    Var<T> mlp = apply(g, block.mlp, apply(g, block.norm2, mixed, eps));
    return add(g, tokens, mlp);
}

template <typename T>
Var<T> global_average_pool(Graph<T>& g, const Var<T>& tokens) {
    return mean_rows(g, tokens);
}

template <typename T>
Var<T> gfnet_forward(Graph<T>& g, const Tensor<T>& image, const GfnetParams<T>& params, const GfConfig& cfg) {
    const T eps = static_cast<T>(cfg.ln_eps);
    Var<T> x = gf_embed(g, image, params, cfg);
    for (const auto& block : params.blocks) x = gf_block(g, x, block, eps);
    return global_average_pool(g, apply(g, params.final_norm, x, eps));
}

#define SF2F_INSTANTIATE(T)                                                                                         \
    template struct GfBlockParams<T>;                                                                              \
    template GfnetParams<T> make_gfnet_params<T>(ParameterStore<T>&, const GfConfig&, Rng&, const std::string&);    \
    template Var<T> gf_embed<T>(Graph<T>&, const Tensor<T>&, const GfnetParams<T>&, const GfConfig&);              \
    template Var<T> gf_block<T>(Graph<T>&, const Var<T>&, const GfBlockParams<T>&, T);                             \
    template Var<T> global_average_pool<T>(Graph<T>&, const Var<T>&);                                              \
    template Var<T> gfnet_forward<T>(Graph<T>&, const Tensor<T>&, const GfnetParams<T>&, const GfConfig&);

SF2F_INSTANTIATE(float)
SF2F_INSTANTIATE(double)

#undef SF2F_INSTANTIATE

}  // namespace sf2f
