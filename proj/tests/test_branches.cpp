#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sf2f/gfnet.hpp"
#include "sf2f/vit.hpp"
#include "support.hpp"

namespace sf2f {
namespace {

using testing::grad_check;
using testing::param_vars;
using testing::probe;
using testing::random_tensor;
namespace O = oracle;

void randomize(ParameterStore<double>& store, std::uint64_t seed, double scale = 0.5) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        store[i].mutable_value() = random_tensor(store[i].value().shape(), seed * 1000 + i, scale);
    }
}

O::Mat mat(const Parameter<double>* p) {
    const auto& v = p->value();
    return O::from_flat(v.storage(), v.dim(0), v.dim(1));
}
std::vector<double> vec(const Parameter<double>* p) { return p ? p->value().storage() : std::vector<double>{}; }

O::Mat mat(const Tensor<double>& t) { return O::from_flat(t.storage(), t.dim(0), t.dim(1)); }

VitConfig small_vit(std::size_t heads = 2) {
    VitConfig c;
    c.image_height = 4;
    c.image_width = 4;
    c.patch = 2;
    c.channels = 1;
    c.dim = 8;
    c.depth = 2;
    c.heads = heads;
    return c;
}

TEST(Patchify, FullScaleCount) {
    const auto p = patchify(Tensor<float>({224, 224, 1}), 16);
    EXPECT_EQ(p.shape(), (Shape{196, 256}));
}

TEST(Patchify, SinglePatchIsFlattenedImage) {
    const auto img = random_tensor({4, 4, 2}, 1);
    const auto p = patchify(img, 4);
    EXPECT_EQ(p.shape(), (Shape{1, 32}));
    EXPECT_EQ(p.storage(), img.storage());
}

TEST(Patchify, RowMajorLayout) {
    Tensor<double> img({4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) img[i] = static_cast<double>(i);  // value = 4y + x
    const auto p = patchify(img, 2);
    ASSERT_EQ(p.shape(), (Shape{4, 4}));
    const std::vector<std::vector<double>> expected{{0, 1, 4, 5}, {2, 3, 6, 7}, {8, 9, 12, 13}, {10, 11, 14, 15}};
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(p.at(r, c), expected[r][c]);
}

TEST(Patchify, ChannelsInterleavedWithinPixel) {
    Tensor<double> img({2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) img[i] = static_cast<double>(i);
    const auto p = patchify(img, 2);
    EXPECT_EQ(p.storage(), img.storage());
    EXPECT_THROW(patchify(Tensor<double>({5, 4, 1}), 2), DimensionError);
}

TEST(VitConfig, Validation) {
    VitConfig c = small_vit();
    c.image_height = 5;
    EXPECT_THROW(c.validate(), DimensionError);
    c = small_vit();
    c.heads = 3;
    EXPECT_THROW(c.validate(), DimensionError);
}

TEST(VitEmbed, Examples) {
    const VitConfig cfg = small_vit();
    ParameterStore<double> store;
    Rng rng(1);
    auto params = make_vit_params(store, cfg, rng);
    randomize(store, 2);
    Graph<double> g(false);

    params.pos_embed->mutable_value().fill(0.0);
    const auto z = vit_embed(g, Tensor<double>({4, 4}), params).value();
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(z.at(0, c), params.cls_token->value()[c]);
    for (std::size_t i = 8; i < z.size(); ++i) EXPECT_EQ(z[i], 0.0);

    randomize(store, 3);
    params.patch_proj->mutable_value().fill(0.0);
    params.cls_token->mutable_value().fill(0.0);
    const auto z2 = vit_embed(g, random_tensor({4, 4}, 9), params).value();
    EXPECT_EQ(z2.storage(), params.pos_embed->value().storage());

    randomize(store, 4);
    const auto patches = random_tensor({4, 4}, 10);
    const auto z3 = vit_embed(g, patches, params).value();
    const auto proj = O::matmul(mat(patches), mat(params.patch_proj));
    const auto pos = mat(params.pos_embed);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(z3.at(0, c), params.cls_token->value()[c] + pos[0][c], 1e-12);
    for (std::size_t r = 1; r <= 4; ++r)
        for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(z3.at(r, c), proj[r - 1][c] + pos[r][c], 1e-6);
    EXPECT_THROW(vit_embed(g, Tensor<double>({3, 4}), params), DimensionError);
}

O::Mat encoder_oracle(const O::Mat& z, const EncoderLayerParams<double>& l, std::size_t heads, double eps,
                      std::vector<O::Mat>* weights = nullptr) {
    const O::Mat a = O::attention(O::layer_norm(z, vec(l.norm1.gamma), vec(l.norm1.beta), eps), mat(l.query.weight),
                                  vec(l.query.bias), mat(l.key.weight), vec(l.key.bias), mat(l.value.weight),
                                  vec(l.value.bias), mat(l.proj.weight), vec(l.proj.bias), heads, weights);
    const O::Mat z1 = O::add(a, z);
    const O::Mat m = O::mlp(O::layer_norm(z1, vec(l.norm2.gamma), vec(l.norm2.beta), eps), mat(l.mlp.fc1.weight),
                            vec(l.mlp.fc1.bias), mat(l.mlp.fc2.weight), vec(l.mlp.fc2.bias));
    return O::add(m, z1);
}

TEST(EncoderLayer, MatchesStepByStepOracle) {
    for (std::size_t heads : {1u, 2u, 4u}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            VitConfig cfg = small_vit(heads);
            ParameterStore<double> store;
            Rng rng(seed);
            auto params = make_vit_params(store, cfg, rng);
            randomize(store, seed + 10);
            const auto z = random_tensor({5, 8}, seed + 20);
            Graph<double> g(false);
            AttentionTrace<double> trace;
            const auto out = encoder_layer(g, Var<double>::leaf(z), params.layers[0], heads, 1e-6, &trace).value();
            std::vector<O::Mat> weights;
            const auto ref = O::flatten(encoder_oracle(mat(z), params.layers[0], heads, 1e-6, &weights));
            ASSERT_EQ(trace.size(), heads);
            for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-6);
            for (std::size_t h = 0; h < heads; ++h) {
                const auto w = O::flatten(weights[h]);
                for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(trace[h][i], w[i], 1e-9);
            }
        }
    }
}

TEST(EncoderLayer, ThreeTokenSingleHeadAttentionRowsSumToOne) {
    VitConfig cfg = small_vit(1);
    cfg.dim = 4;
    ParameterStore<double> store;
    Rng rng(7);
    auto params = make_vit_params(store, cfg, rng);
    randomize(store, 7);
    Graph<double> g(false);
    AttentionTrace<double> trace;
    const auto out = encoder_layer(g, Var<double>::leaf(random_tensor({3, 4}, 8)), params.layers[0], 1, 1e-6, &trace);
    ASSERT_EQ(trace.size(), 1u);
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += trace[0].at(r, c);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    const auto ref = O::flatten(encoder_oracle(mat(random_tensor({3, 4}, 8)), params.layers[0], 1, 1e-6));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.value()[i], ref[i], 1e-6);
}

TEST(EncoderLayer, SingleTokenAttendsToItself) {
    VitConfig cfg = small_vit(2);
    ParameterStore<double> store;
    Rng rng(3);
    auto params = make_vit_params(store, cfg, rng);
    randomize(store, 3);
    Graph<double> g(false);
    AttentionTrace<double> trace;
    encoder_layer(g, Var<double>::leaf(random_tensor({1, 8}, 1)), params.layers[0], 2, 1e-6, &trace);
    for (const auto& a : trace) EXPECT_EQ(a.storage(), std::vector<double>{1.0});
}

TEST(EncoderLayer, ZeroWeightLayerIsExactIdentity) {
    VitConfig cfg = small_vit(2);
    ParameterStore<double> store;
    Rng rng(4);
    auto params = make_vit_params(store, cfg, rng);
    randomize(store, 4);
    for (std::size_t i = 0; i < store.size(); ++i) {
        if (store[i].name.find("layers.0.") != std::string::npos) store[i].mutable_value().fill(0.0);
    }
    const auto z = random_tensor({5, 8}, 5);
    Graph<double> g(false);
    EXPECT_EQ(encoder_layer(g, Var<double>::leaf(z), params.layers[0], 2, 1e-6).value().storage(), z.storage());
}

TEST(VitForward, ShapeAndAttentionRows) {
    const VitConfig cfg = small_vit(2);
    ParameterStore<double> store;
    Rng rng(5);
    auto params = make_vit_params(store, cfg, rng);
    randomize(store, 5);
    Graph<double> g(false);
    AttentionTrace<double> trace;
    const auto y = vit_forward(g, random_tensor({4, 4, 1}, 6), params, cfg, &trace);
    EXPECT_EQ(y.shape(), (Shape{8}));
    EXPECT_EQ(trace.size(), cfg.depth * cfg.heads);
    for (const auto& a : trace) {
        for (std::size_t r = 0; r < a.dim(0); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < a.dim(1); ++c) s += a.at(r, c);
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
    EXPECT_THROW(vit_forward(g, random_tensor({8, 4, 1}, 6), params, cfg), DimensionError);
}

TEST(VitForward, JointPermutationOfTokensAndPositionsLeavesOutputUnchanged) {
    const VitConfig cfg = small_vit(2);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ParameterStore<double> store;
        Rng rng(seed);
        auto params = make_vit_params(store, cfg, rng);
        randomize(store, seed + 30);
        const auto patches = random_tensor({4, 4}, seed + 40);
        Graph<double> g(false);
        const auto y = vit_forward_patches(g, patches, params, cfg).value();

        // Swap patch rows 1 and 3 together with position rows 2 and 4.
        Tensor<double> swapped = patches;
        Tensor<double>& pos = params.pos_embed->mutable_value();
        for (std::size_t c = 0; c < 4; ++c) std::swap(swapped.at(1, c), swapped.at(3, c));
        for (std::size_t c = 0; c < 8; ++c) std::swap(pos.at(2, c), pos.at(4, c));
        const auto y2 = vit_forward_patches(g, swapped, params, cfg).value();
        EXPECT_LT(max_abs_diff(y, y2), 1e-5);
    }
}

TEST(VitForward, SeparateImagesDoNotInteract) {
    const VitConfig cfg = small_vit(2);
    ParameterStore<double> store;
    Rng rng(8);
    auto params = make_vit_params(store, cfg, rng);
    randomize(store, 8);
    const auto a = random_tensor({4, 4, 1}, 1);
    const auto b = random_tensor({4, 4, 1}, 2);
    Graph<double> g1(false), g2(false);
    const auto ya = vit_forward(g1, a, params, cfg).value();
    const auto yb = vit_forward(g1, b, params, cfg).value();
    const auto yb_alone = vit_forward(g2, b, params, cfg).value();
    const auto ya_again = vit_forward(g2, a, params, cfg).value();
    EXPECT_EQ(ya, ya_again);
    EXPECT_EQ(yb, yb_alone);
}

TEST(VitForward, FullScaleTokenCount) {
    VitConfig cfg;
    EXPECT_EQ(cfg.num_patches(), 196u);
    EXPECT_EQ(cfg.num_tokens(), 197u);
    EXPECT_EQ(cfg.depth, 12u);
    EXPECT_EQ(cfg.dim, 768u);
}

class VitGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(VitGradients, EveryParameterMatchesFiniteDifferences) {
    VitConfig cfg = small_vit(2);
    cfg.dim = 16;
    ParameterStore<double> store;
    Rng rng(GetParam());
    auto params = make_vit_params(store, cfg, rng);
    randomize(store, GetParam() + 50, 0.3);
    const auto img = random_tensor({4, 4, 1}, GetParam() + 60);
    const auto r = grad_check([&](Graph<double>& g) { return probe(g, vit_forward(g, img, params, cfg)); },
                              param_vars(store), 1e-5, 1e-5, 24);
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

INSTANTIATE_TEST_SUITE_P(Seeds, VitGradients, ::testing::Range<std::uint64_t>(0, 3));

// ---------------------------------------------------------------------------

GfConfig small_gf(std::size_t dim = 3) {
    GfConfig c;
    c.image_height = 8;
    c.image_width = 8;
    c.patch = 2;
    c.channels = 1;
    c.dim = dim;
    c.depth = 2;
    return c;
}

TEST(GfConfig, FullScaleGrid) {
    GfConfig c;
    EXPECT_EQ(c.grid_height(), 14u);
    EXPECT_EQ(c.grid_width(), 14u);
    EXPECT_EQ(c.num_tokens(), 196u);
    EXPECT_EQ(c.dim, 512u);
    EXPECT_EQ(c.depth, 19u);
}

TEST(GfEmbed, ZeroImageAndSharedPatchifyOracle) {
    const GfConfig cfg = small_gf();
    ParameterStore<double> store;
    Rng rng(1);
    auto params = make_gfnet_params(store, cfg, rng);
    Graph<double> g(false);
    const auto z = gf_embed(g, Tensor<double>({8, 8, 1}), params, cfg).value();
    EXPECT_EQ(z.shape(), (Shape{16, 3}));
    for (double v : z.values()) EXPECT_EQ(v, 0.0);

    randomize(store, 2);
    const auto img = random_tensor({8, 8, 1}, 3);
    const auto e = gf_embed(g, img, params, cfg).value();
    const auto ref = O::flatten(
        O::affine(mat(patchify(img, 2)), mat(params.patch_embed.weight), vec(params.patch_embed.bias)));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(e[i], ref[i], 1e-6);
}

TEST(GfBlock, ZeroMlpOutputIsIdentity) {
    const GfConfig cfg = small_gf();
    ParameterStore<double> store;
    Rng rng(2);
    auto params = make_gfnet_params(store, cfg, rng);
    randomize(store, 2);
    params.blocks[0].mlp.fc2.weight->mutable_value().fill(0.0);
    params.blocks[0].mlp.fc2.bias->mutable_value().fill(0.0);
    const auto x = random_tensor({16, 3}, 3);
    Graph<double> g(false);
    EXPECT_EQ(gf_block(g, Var<double>::leaf(x), params.blocks[0], 1e-6).value().storage(), x.storage());
}

O::Mat gf_block_oracle(const O::Mat& x, const GfBlockParams<double>& b, std::size_t h, std::size_t w, double eps) {
    const O::Mat n1 = O::layer_norm(x, vec(b.norm1.gamma), vec(b.norm1.beta), eps);
    const std::size_t d = x[0].size();
    // Direct 2D DFT, elementwise product, direct inverse DFT, real part.
    O::Mat filtered(h * w, std::vector<double>(d, 0.0));
    const auto& kr = b.filter_re->value();
    const auto& ki = b.filter_im->value();
    for (std::size_t c = 0; c < d; ++c) {
        std::vector<std::complex<double>> spec(h * w);
        for (std::size_t u = 0; u < h; ++u)
            for (std::size_t v = 0; v < w; ++v) {
                std::complex<double> acc = 0.0;
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t xx = 0; xx < w; ++xx)
                        acc += n1[y * w + xx][c] *
                               std::polar(1.0, -2.0 * std::numbers::pi *
                                                   (double(u * y) / double(h) + double(v * xx) / double(w)));
                const std::size_t k = (u * w + v) * d + c;
                spec[u * w + v] = acc * std::complex<double>(kr[k], ki[k]);
            }
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
                std::complex<double> acc = 0.0;
                for (std::size_t u = 0; u < h; ++u)
                    for (std::size_t v = 0; v < w; ++v)
                        acc += spec[u * w + v] *
                               std::polar(1.0, 2.0 * std::numbers::pi *
                                                   (double(u * y) / double(h) + double(v * xx) / double(w)));
                filtered[y * w + xx][c] = acc.real() / double(h * w);
            }
    }
    const O::Mat m = O::mlp(O::layer_norm(filtered, vec(b.norm2.gamma), vec(b.norm2.beta), eps),
                            mat(b.mlp.fc1.weight), vec(b.mlp.fc1.bias), mat(b.mlp.fc2.weight), vec(b.mlp.fc2.bias));
    return O::add(x, m);
}

TEST(GfBlock, MatchesCompositionOracle) {
    const GfConfig cfg = small_gf(3);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ParameterStore<double> store;
        Rng rng(seed);
        auto params = make_gfnet_params(store, cfg, rng);
        randomize(store, seed + 5);
        const auto x = random_tensor({16, 3}, seed + 9);
        Graph<double> g(false);
        const auto out = gf_block(g, Var<double>::leaf(x), params.blocks[0], 1e-6).value();
        const auto ref = O::flatten(gf_block_oracle(mat(x), params.blocks[0], 4, 4, 1e-6));
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-6);
    }
}

TEST(GfBlock, IdentityFilterReducesToPreNormMlpBlock) {
    const GfConfig cfg = small_gf(3);
    ParameterStore<double> store;
    Rng rng(11);
    auto params = make_gfnet_params(store, cfg, rng);
    randomize(store, 11);
    auto& b = params.blocks[0];
    b.filter_re->mutable_value().fill(1.0);
    b.filter_im->mutable_value().fill(0.0);
    const auto x = random_tensor({16, 3}, 12);
    Graph<double> g(false);
    const auto out = gf_block(g, Var<double>::leaf(x), b, 1e-6).value();
    const O::Mat n1 = O::layer_norm(mat(x), vec(b.norm1.gamma), vec(b.norm1.beta), 1e-6);
    const O::Mat ref = O::add(mat(x), O::mlp(O::layer_norm(n1, vec(b.norm2.gamma), vec(b.norm2.beta), 1e-6),
                                             mat(b.mlp.fc1.weight), vec(b.mlp.fc1.bias), mat(b.mlp.fc2.weight),
                                             vec(b.mlp.fc2.bias)));
    const auto flat = O::flatten(ref);
    for (std::size_t i = 0; i < flat.size(); ++i) EXPECT_NEAR(out[i], flat[i], 1e-6);
}

TEST(GfnetForward, IdentityFiltersMatchPureMlpStack) {
    const GfConfig cfg = small_gf(4);
    ParameterStore<double> store;
    Rng rng(13);
    auto params = make_gfnet_params(store, cfg, rng);
    randomize(store, 13);
    for (auto& b : params.blocks) {
        b.filter_re->mutable_value().fill(1.0);
        b.filter_im->mutable_value().fill(0.0);
    }
    const auto img = random_tensor({8, 8, 1}, 14);
    Graph<double> g(false);
    const auto y = gfnet_forward(g, img, params, cfg).value();
    O::Mat x = O::affine(mat(patchify(img, 2)), mat(params.patch_embed.weight), vec(params.patch_embed.bias));
    for (const auto& b : params.blocks) {
        const O::Mat n1 = O::layer_norm(x, vec(b.norm1.gamma), vec(b.norm1.beta), 1e-6);
        x = O::add(x, O::mlp(O::layer_norm(n1, vec(b.norm2.gamma), vec(b.norm2.beta), 1e-6), mat(b.mlp.fc1.weight),
                             vec(b.mlp.fc1.bias), mat(b.mlp.fc2.weight), vec(b.mlp.fc2.bias)));
    }
    x = O::layer_norm(x, vec(params.final_norm.gamma), vec(params.final_norm.beta), 1e-6);
    for (std::size_t c = 0; c < 4; ++c) {
        double acc = 0.0;
        for (const auto& row : x) acc += row[c];
        EXPECT_NEAR(y[c], acc / static_cast<double>(x.size()), 1e-5);
    }
}

TEST(GlobalAveragePool, MatchesDirectAccumulationAndConstantRows) {
    const auto t = random_tensor({7, 5}, 1);
    Graph<double> g(false);
    const auto y = global_average_pool(g, Var<double>::leaf(t)).value();
    for (std::size_t c = 0; c < 5; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < 7; ++r) acc += t.at(r, c);
        EXPECT_NEAR(y[c], acc / 7.0, 1e-15);
    }
    Tensor<double> rows({4, 3});
    for (std::size_t r = 0; r < 4; ++r) {
        rows.at(r, 0) = 0.25;
        rows.at(r, 1) = -1.5;
        rows.at(r, 2) = 3.0;
    }
    EXPECT_EQ(global_average_pool(g, Var<double>::leaf(rows)).value().storage(), (std::vector<double>{0.25, -1.5, 3.0}));
}

TEST(GfnetParams, FilterInitHasUnitDcBin) {
    const GfConfig cfg = small_gf(4);
    ParameterStore<float> store;
    Rng rng(1);
    auto params = make_gfnet_params(store, cfg, rng);
    for (const auto& b : params.blocks) {
        EXPECT_EQ(b.filter_re->value().shape(), (Shape{4, 4, 4}));
        for (std::size_t c = 0; c < 4; ++c) {
            EXPECT_EQ(b.filter_re->value()[c], 1.0f);
            EXPECT_EQ(b.filter_im->value()[c], 0.0f);
        }
    }
}

class GfnetGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GfnetGradients, EveryParameterMatchesFiniteDifferences) {
    GfConfig cfg = small_gf(8);
    ParameterStore<double> store;
    Rng rng(GetParam());
    auto params = make_gfnet_params(store, cfg, rng);
    randomize(store, GetParam() + 70, 0.3);
    const auto img = random_tensor({8, 8, 1}, GetParam() + 80);
    const auto r = grad_check([&](Graph<double>& g) { return probe(g, gfnet_forward(g, img, params, cfg)); },
                              param_vars(store), 1e-5, 1e-5, 24);
    EXPECT_LT(r.max_rel, 1e-4) << r.worst;
}

INSTANTIATE_TEST_SUITE_P(Seeds, GfnetGradients, ::testing::Range<std::uint64_t>(0, 3));

TEST(GfBlockGradients, MatchFiniteDifferencesIncludingInput) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GfConfig cfg = small_gf(3);
        ParameterStore<double> store;
        Rng rng(seed);
        auto params = make_gfnet_params(store, cfg, rng);
        randomize(store, seed + 90, 0.4);
        auto x = Var<double>::leaf(random_tensor({16, 3}, seed + 91), true);
        auto leaves = param_vars(store);
        leaves.push_back(&x);
        const auto r = grad_check([&](Graph<double>& g) { return probe(g, gf_block(g, x, params.blocks[0], 1e-6)); },
                                  leaves, 1e-5, 1e-5, 16);
        EXPECT_LT(r.max_rel, 1e-4) << "seed " << seed << ": " << r.worst;
    }
}

TEST(EncoderGradients, MatchFiniteDifferencesIncludingInput) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        VitConfig cfg = small_vit(2);
        ParameterStore<double> store;
        Rng rng(seed);
        auto params = make_vit_params(store, cfg, rng);
        randomize(store, seed + 95, 0.4);
        auto z = Var<double>::leaf(random_tensor({5, 8}, seed + 96), true);
        std::vector<Var<double>*> leaves{&z};
        for (std::size_t i = 0; i < store.size(); ++i) {
            if (store[i].name.find("layers.0.") != std::string::npos) leaves.push_back(&store[i].var);
        }
        const auto r = grad_check(
            [&](Graph<double>& g) { return probe(g, encoder_layer(g, z, params.layers[0], 2, 1e-6)); }, leaves,
            1e-5, 1e-5, 16);
        EXPECT_LT(r.max_rel, 1e-4) << "seed " << seed << ": " << r.worst;
    }
}

}  // namespace
}  // namespace sf2f
