#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "sf2f/config.hpp"
#include "sf2f/gfnet.hpp"
#include "sf2f/vit.hpp"

namespace sf2f {

enum class Branch { Both, VitOnly, GfnetOnly };

std::string to_string(Branch b);
/// Accepts both|vit|gfnet (and vit_only / gfnet_only).
Branch parse_branch(const std::string& s);

/// Class indices. The positive class for all metrics is Patient.
inline constexpr int kControl = 0;
inline constexpr int kPatient = 1;

struct ModelConfig {
    std::size_t image_height = 224;
    std::size_t image_width = 224;
    std::size_t channels = 1;
    std::size_t patch = 16;
    std::size_t vit_dim = 768;
    std::size_t vit_depth = 12;
    std::size_t vit_heads = 12;
    double vit_mlp_ratio = 4.0;
    std::size_t gf_dim = 512;
    std::size_t gf_depth = 19;
    double gf_mlp_ratio = 4.0;
    double ln_eps = 1e-6;
    double filter_init_std = 0.01;
    std::size_t num_classes = 2;
    Branch branch = Branch::Both;

    /// ViT-Base spatial branch and GFNet-B frequency branch at 224x224, P=16.
    static ModelConfig full_scale();
    /// Desk-scale model: 32x32 slices, P=8, D=32, L=2, m=32, M=2.
    static ModelConfig toy();

    VitConfig vit() const;
    GfConfig gfnet() const;
    std::size_t fusion_width() const;
    void validate() const;

    KeyValues to_key_values() const;
    static ModelConfig from_key_values(const KeyValues& kv);
};

/// Two-branch classifier: ViT class-token feature and GFNet pooled feature,
/// concatenated and mapped to logits by one linear layer. Both branches own
/// parameters regardless of `branch`; only the active ones feed the head.
template <typename T>
class Sf2Former {
public:
    Sf2Former(const ModelConfig& cfg, std::uint64_t seed);

    Sf2Former(Sf2Former&&) noexcept = default;
    Sf2Former& operator=(Sf2Former&&) noexcept = default;

    const ModelConfig& config() const noexcept { return cfg_; }
    ParameterStore<T>& parameters() noexcept { return store_; }
    const ParameterStore<T>& parameters() const noexcept { return store_; }

    const VitParams<T>& vit() const noexcept { return vit_; }
    const GfnetParams<T>& gfnet() const noexcept { return gfnet_; }
    const LinearRef<T>& fusion() const noexcept { return fusion_; }

    /// Concatenated branch features feeding the fusion head.
    Var<T> features(Graph<T>& g, const Tensor<T>& image) const;

    /// Logits [num_classes] for one [H, W, C] slice.
    Var<T> forward(Graph<T>& g, const Tensor<T>& image) const;

private:
    ModelConfig cfg_;
    ParameterStore<T> store_;
    VitParams<T> vit_;
    GfnetParams<T> gfnet_;
    LinearRef<T> fusion_;
};

template <typename T>
Var<T> fuse_forward(Graph<T>& g, const Sf2Former<T>& model, const Tensor<T>& image) {
    return model.forward(g, image);
}

struct SlicePrediction {
    int label = kControl;
    std::array<double, 2> probs{0.5, 0.5};  // [control, patient]

    double p_patient() const { return probs[kPatient]; }
};

/// Softmax of the logits; the class is the argmax with ties going to index 0.
template <typename T>
SlicePrediction predict_slice(const Sf2Former<T>& model, const Tensor<T>& image);

SlicePrediction prediction_from_logits(double logit_control, double logit_patient);

}  // namespace sf2f
