#include "sf2f/model.hpp"

#include <cmath>

namespace sf2f {

std::string to_string(Branch b) {
    switch (b) {
        case Branch::Both: return "both";
        case Branch::VitOnly: return "vit";
        case Branch::GfnetOnly: return "gfnet";
    }
    return "both";
}

Branch parse_branch(const std::string& s) {
    if (s == "both") return Branch::Both;
    if (s == "vit" || s == "vit_only") return Branch::VitOnly;
    if (s == "gfnet" || s == "gfnet_only") return Branch::GfnetOnly;
    throw Error("unknown branch '" + s + "' (expected both, vit or gfnet)");
}

ModelConfig ModelConfig::full_scale() { return ModelConfig{}; }

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.image_height = 32;
    c.image_width = 32;
    c.patch = 8;
    c.vit_dim = 32;
    c.vit_depth = 2;
    c.vit_heads = 2;
    c.gf_dim = 32;
    c.gf_depth = 2;
    return c;
}

VitConfig ModelConfig::vit() const {
    VitConfig v;
    v.image_height = image_height;
    v.image_width = image_width;
    v.patch = patch;
    v.channels = channels;
    v.dim = vit_dim;
    v.depth = vit_depth;
    v.heads = vit_heads;
    v.mlp_ratio = vit_mlp_ratio;
    v.ln_eps = ln_eps;
    return v;
}

GfConfig ModelConfig::gfnet() const {
    GfConfig g;
    g.image_height = image_height;
    g.image_width = image_width;
    g.patch = patch;
    g.channels = channels;
    g.dim = gf_dim;
    g.depth = gf_depth;
    g.mlp_ratio = gf_mlp_ratio;
    g.ln_eps = ln_eps;
    g.filter_init_std = filter_init_std;
    return g;
}

std::size_t ModelConfig::fusion_width() const {
    switch (branch) {
        case Branch::VitOnly: return vit_dim;
        case Branch::GfnetOnly: return gf_dim;
        case Branch::Both: break;
    }
    return vit_dim + gf_dim;
}

void ModelConfig::validate() const {
    vit().validate();
    gfnet().validate();
    if (num_classes < 2) throw DimensionError("num_classes must be at least 2");
    if (!(ln_eps > 0.0)) throw Error("ln_eps must be positive");
}

KeyValues ModelConfig::to_key_values() const {
    KeyValues kv;
    kv["model.image_height"] = std::to_string(image_height);
    kv["model.image_width"] = std::to_string(image_width);
    kv["model.channels"] = std::to_string(channels);
    kv["model.patch"] = std::to_string(patch);
    kv["model.vit.dim"] = std::to_string(vit_dim);
    kv["model.vit.depth"] = std::to_string(vit_depth);
    kv["model.vit.heads"] = std::to_string(vit_heads);
    kv["model.vit.mlp_ratio"] = format_double(vit_mlp_ratio);
    kv["model.gfnet.dim"] = std::to_string(gf_dim);
    kv["model.gfnet.depth"] = std::to_string(gf_depth);
    kv["model.gfnet.mlp_ratio"] = format_double(gf_mlp_ratio);
    kv["model.gfnet.filter_init_std"] = format_double(filter_init_std);
    kv["model.ln_eps"] = format_double(ln_eps);
    kv["model.num_classes"] = std::to_string(num_classes);
    kv["model.branch"] = to_string(branch);
    return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
    ModelConfig c;
    auto sz = [&](const char* key, std::size_t fallback) {
        const long long v = kv_int(kv, key, static_cast<long long>(fallback));
        if (v <= 0) throw Error(std::string("config key '") + key + "' must be positive");
        return static_cast<std::size_t>(v);
    };
    c.image_height = sz("model.image_height", c.image_height);
    c.image_width = sz("model.image_width", c.image_width);
    c.channels = sz("model.channels", c.channels);
    c.patch = sz("model.patch", c.patch);
    c.vit_dim = sz("model.vit.dim", c.vit_dim);
    c.vit_depth = sz("model.vit.depth", c.vit_depth);
    c.vit_heads = sz("model.vit.heads", c.vit_heads);
    c.vit_mlp_ratio = kv_double(kv, "model.vit.mlp_ratio", c.vit_mlp_ratio);
    c.gf_dim = sz("model.gfnet.dim", c.gf_dim);
    c.gf_depth = sz("model.gfnet.depth", c.gf_depth);
    c.gf_mlp_ratio = kv_double(kv, "model.gfnet.mlp_ratio", c.gf_mlp_ratio);
    c.filter_init_std = kv_double(kv, "model.gfnet.filter_init_std", c.filter_init_std);
    c.ln_eps = kv_double(kv, "model.ln_eps", c.ln_eps);
    c.num_classes = sz("model.num_classes", c.num_classes);
    c.branch = parse_branch(kv_string(kv, "model.branch", to_string(c.branch)));
    return c;
}

template <typename T>
Sf2Former<T>::Sf2Former(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    vit_ = make_vit_params(store_, cfg_.vit(), rng);
    gfnet_ = make_gfnet_params(store_, cfg_.gfnet(), rng);
    fusion_ = make_linear(store_, "fusion", cfg_.fusion_width(), cfg_.num_classes, rng);
}

template <typename T>
Var<T> Sf2Former<T>::features(Graph<T>& g, const Tensor<T>& image) const {
    if (image.rank() != 3 || image.dim(0) != cfg_.image_height || image.dim(1) != cfg_.image_width ||
        image.dim(2) != cfg_.channels) {
        throw DimensionError("model expects [" + std::to_string(cfg_.image_height) + "," +
                             std::to_string(cfg_.image_width) + "," + std::to_string(cfg_.channels) +
                             "] slices, got " + shape_str(image.shape()));
    }
    switch (cfg_.branch) {
        case Branch::VitOnly: return vit_forward(g, image, vit_, cfg_.vit());
        case Branch::GfnetOnly: return gfnet_forward(g, image, gfnet_, cfg_.gfnet());
        case Branch::Both: break;
    }
    const std::array<Var<T>, 2> parts{vit_forward(g, image, vit_, cfg_.vit()),
                                      gfnet_forward(g, image, gfnet_, cfg_.gfnet())};
    return concat_last<T>(g, parts);
}

template <typename T>
Var<T> Sf2Former<T>::forward(Graph<T>& g, const Tensor<T>& image) const {
    return apply(g, fusion_, features(g, image));
}

SlicePrediction prediction_from_logits(double logit_control, double logit_patient) {
    const double m = std::max(logit_control, logit_patient);
    const double e0 = std::exp(logit_control - m);
    const double e1 = std::exp(logit_patient - m);
    SlicePrediction p;
    p.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
    p.label = logit_patient > logit_control ? kPatient : kControl;
    return p;
}

template <typename T>
SlicePrediction predict_slice(const Sf2Former<T>& model, const Tensor<T>& image) {
    Graph<T> g(false);
    Var<T> logits = model.forward(g, image);
    if (model.config().num_classes != 2) throw DimensionError("predict_slice supports two-class models");
    return prediction_from_logits(static_cast<double>(logits.value()[0]), static_cast<double>(logits.value()[1]));
}

template class Sf2Former<float>;
template class Sf2Former<double>;
template SlicePrediction predict_slice<float>(const Sf2Former<float>&, const Tensor<float>&);
template SlicePrediction predict_slice<double>(const Sf2Former<double>&, const Tensor<double>&);

}  // namespace sf2f
