#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "support/gradcheck.hpp"
#include "voxelseg/network.hpp"

using namespace voxelseg;
using testsupport::fd_max_rel_error;

namespace {

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.input_channels = 1;
    cfg.classes = 2;
    cfg.levels = 3;
    cfg.base_channels = 4;
    cfg.patch_size = 2;
    cfg.embed_dim = 16;
    cfg.n_heads = 2;
    cfg.input_size = {16, 16, 16};
    cfg.seed = 7;
    return cfg;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.levels = 2;
    cfg.base_channels = 2;
    cfg.patch_size = 2;
    cfg.embed_dim = 8;
    cfg.n_heads = 2;
    cfg.input_size = {8, 8, 8};
    cfg.seed = 3;
    return cfg;
}

Tensor random_volume(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return rand_uniform({cfg.input_channels, cfg.input_size[0], cfg.input_size[1], cfg.input_size[2]}, rng, 0.0, 1.0);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("all feature flags off builds the same graph as the baseline builder") {
    ModelConfig cfg = micro_config();
    cfg.use_pam = cfg.use_gates = cfg.use_multiscale = false;
    ModelGraph mpu = build_mpunet(cfg);
    ModelGraph unet = build_unet3d(micro_config());
    REQUIRE(mpu.params.size() == unet.params.size());
    for (std::size_t i = 0; i < mpu.params.size(); ++i) {
        REQUIRE(mpu.params[i].name == unet.params[i].name);
        REQUIRE(bitwise_equal(mpu.params[i].tensor, unet.params[i].tensor));
    }
    Tensor vol = random_volume(cfg, 10);
    REQUIRE(bitwise_equal(mpu.forward(vol), unet.forward(vol)));
}

TEST_CASE("micro config forward emits logits at input resolution") {
    ModelGraph g = build_mpunet(micro_config());
    Tensor vol = random_volume(g.cfg, 11);
    std::vector<Tensor> taps;
    Tensor logits = g.forward(vol, false, &taps);
    REQUIRE(logits.shape() == Shape{2, 16, 16, 16});
    REQUIRE(taps.size() == 4);  // grid + bottleneck + two decoder levels
    for (std::size_t i = 1; i < taps.size(); ++i)
        REQUIRE(taps[i].shape()[2] * taps[i].shape()[3] * taps[i].shape()[4] >
                taps[i - 1].shape()[2] * taps[i - 1].shape()[3] * taps[i - 1].shape()[4]);
}

TEST_CASE("baseline forward emits logits at input resolution") {
    ModelConfig cfg = micro_config();
    ModelGraph g = build_unet3d(cfg);
    Tensor vol = random_volume(cfg, 12);
    std::vector<Tensor> taps;
    Tensor logits = g.forward(vol, false, &taps);
    REQUIRE(logits.shape() == Shape{2, 16, 16, 16});
    REQUIRE(taps.size() == 1);
    for (double v : logits.data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("per-voxel softmax of the logits sums to one") {
    ModelGraph g = build_mpunet(micro_config());
    Tensor logits = g.forward(random_volume(g.cfg, 13));
    Tensor prob = softmax(logits, 0);
    const std::size_t vox = 16 * 16 * 16;
    for (std::size_t i = 0; i < vox; i += 37) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 2; ++c) sum += prob.data()[c * vox + i];
        REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("repeated eval-mode forwards are bitwise identical") {
    ModelGraph g = build_mpunet(micro_config());
    Tensor vol = random_volume(g.cfg, 14);
    REQUIRE(bitwise_equal(g.forward(vol), g.forward(vol)));
}

TEST_CASE("forward rejects incompatible resolutions") {
    ModelGraph g = build_mpunet(micro_config());
    REQUIRE_THROWS_AS(g.forward(Tensor::zeros({1, 8, 8, 8})), ShapeError);     // embedding fixed to 16^3
    REQUIRE_THROWS_AS(g.forward(Tensor::zeros({1, 12, 12, 12})), ShapeError);  // not divisible
    REQUIRE_THROWS_AS(g.forward(Tensor::zeros({2, 16, 16, 16})), ShapeError);  // channels
}

TEST_CASE("config validation rejects bad settings") {
    ModelConfig cfg = micro_config();
    cfg.levels = 1;
    REQUIRE_THROWS_AS(build_mpunet(cfg), ConfigError);
    cfg = micro_config();
    cfg.embed_dim = 10;
    cfg.n_heads = 4;
    REQUIRE_THROWS_AS(build_mpunet(cfg), ConfigError);
    cfg = micro_config();
    cfg.input_size = {20, 16, 16};  // not divisible by 2^(levels-1)*P = 8
    REQUIRE_THROWS_AS(build_mpunet(cfg), ConfigError);
    cfg = micro_config();
    cfg.upsample_factor = 3;
    REQUIRE_THROWS_AS(build_mpunet(cfg), ConfigError);
}

TEST_CASE("parameter count of an empty graph is zero") {
    ModelGraph g;
    REQUIRE(g.count_parameters() == 0);
    g.params.push_back({"w", Tensor::zeros({1, 1, 1, 1, 1}, true), true});
    g.params.push_back({"b", Tensor::zeros({1}, true), true});
    REQUIRE(g.count_parameters() == 2);  // a 1x1x1 conv with bias
    g.params.push_back({"buf", Tensor::zeros({5}), false});
    REQUIRE(g.count_parameters() == 2);  // buffers do not count
}

TEST_CASE("baseline parameter count equals the hand-summed ledger") {
    ModelConfig cfg;
    cfg.levels = 2;
    cfg.base_channels = 2;
    cfg.input_channels = 1;
    cfg.classes = 2;
    cfg.use_pam = cfg.use_gates = cfg.use_multiscale = false;
    cfg.input_size = {8, 8, 8};
    ModelGraph g = build_unet3d(cfg);
    // per conv: k^3*C_in*C_out + C_out, plus gamma+beta per batchnorm
    const std::size_t expected = (27 * 1 * 2 + 2) + 4     // enc0.block1
                               + (27 * 2 * 2 + 2) + 4     // enc0.block2
                               + (27 * 2 * 4 + 4) + 8     // enc1.block1
                               + (27 * 4 * 4 + 4) + 8     // enc1.block2
                               + (27 * 6 * 2 + 2) + 4     // dec0.block1 (skip 2 + upsampled 4)
                               + (27 * 2 * 2 + 2) + 4     // dec0.block2
                               + (1 * 2 * 2 + 2);         // final 1x1x1 head
    REQUIRE(g.count_parameters() == expected);
}

TEST_CASE("every feature flag adds parameters over the baseline") {
    ModelConfig base = micro_config();
    base.use_pam = base.use_gates = base.use_multiscale = false;
    const std::size_t baseline = build_mpunet(base).count_parameters();
    for (int flags = 1; flags < 8; ++flags) {
        ModelConfig cfg = micro_config();
        cfg.use_pam = flags & 1;
        cfg.use_gates = flags & 2;
        cfg.use_multiscale = flags & 4;
        REQUIRE(build_mpunet(cfg).count_parameters() > baseline);
    }
}

TEST_CASE("parameter names are unique and stable") {
    ModelGraph g = build_mpunet(micro_config());
    std::set<std::string> names;
    for (const auto& p : g.params) REQUIRE(names.insert(p.name).second);
    REQUIRE_NOTHROW(g.find_param("enc0.block1.conv.weight"));
    REQUIRE_NOTHROW(g.find_param("bottleneck.pam.lambda"));
    REQUIRE_THROWS_AS(g.find_param("nope"), ValueError);
}

TEST_CASE("forward equals a straight-line composition of the module ops") {
    ModelGraph g = build_mpunet(micro_config());
    Tensor vol = random_volume(g.cfg, 15);
    std::vector<Tensor> taps;
    Tensor logits = g.forward(vol, false, &taps);

    // hand-composed wiring in eval mode, module ops only
    auto conv_bn_relu = [&](const Tensor& x, const std::string& prefix) {
        RunningStats stats = RunningStats::identity(g.find_param(prefix + ".bn.gamma").size());
        stats.mean.data() = g.find_param(prefix + ".bn.running_mean").data();
        stats.var.data() = g.find_param(prefix + ".bn.running_var").data();
        Tensor y = conv3d(x, g.find_param(prefix + ".conv.weight"), g.find_param(prefix + ".conv.bias"), 1, 1);
        return relu(batchnorm(y, g.find_param(prefix + ".bn.gamma"), g.find_param(prefix + ".bn.beta"), stats, false));
    };
    auto cascade = [&](const Tensor& x, const std::string& prefix) {
        CascadeStageParams p{g.find_param(prefix + ".conv.weight"), g.find_param(prefix + ".conv.bias"),
                             g.find_param(prefix + ".prelu"), 2};
        return cascaded_upsample_stage(x, p);
    };

    Tensor x = reshape(vol, {1, 1, 16, 16, 16});
    std::vector<Tensor> skips;
    for (std::size_t l = 0; l < 3; ++l) {
        if (l > 0) x = maxpool(x, 2, 3);
        x = conv_bn_relu(x, "enc" + std::to_string(l) + ".block1");
        x = conv_bn_relu(x, "enc" + std::to_string(l) + ".block2");
        skips.push_back(x);
    }

    const std::size_t cb = 16, bd = 4, P = 2, gd = 2;
    PatchSequence seq = patchify(reshape(skips[2], {cb, bd, bd, bd}), P);
    PatchEmbedding emb{g.find_param("bottleneck.embed.W"), g.find_param("bottleneck.embed.E_pos"), P, 16};
    Tensor z = embed(seq, emb);
    MultiHeadWeights mha{g.find_param("bottleneck.mha.W_Q"), g.find_param("bottleneck.mha.W_K"),
                         g.find_param("bottleneck.mha.W_V"), g.find_param("bottleneck.mha.W_out"), 2};
    z = multi_head_attention(z, mha);
    Tensor grid = reshape_sequence_to_grid(z, P, bd, bd, bd);
    PamState pam;
    pam.bn_gamma = g.find_param("bottleneck.pam.bn.gamma");
    pam.bn_beta = g.find_param("bottleneck.pam.bn.beta");
    pam.bn_stats = RunningStats::identity(16);
    pam.bn_stats.mean.data() = g.find_param("bottleneck.pam.bn.running_mean").data();
    pam.bn_stats.var.data() = g.find_param("bottleneck.pam.bn.running_var").data();
    pam.prelu_slope = g.find_param("bottleneck.pam.prelu");
    pam.conv_A = g.find_param("bottleneck.pam.conv_A.weight");
    pam.bias_A = g.find_param("bottleneck.pam.conv_A.bias");
    pam.conv_B = g.find_param("bottleneck.pam.conv_B.weight");
    pam.bias_B = g.find_param("bottleneck.pam.conv_B.bias");
    pam.conv_C = g.find_param("bottleneck.pam.conv_C.weight");
    pam.bias_C = g.find_param("bottleneck.pam.conv_C.bias");
    pam.lambda = g.find_param("bottleneck.pam.lambda");
    Tensor pam_grid = pam_forward(reshape(grid, {16, gd, gd, gd}), pam, false);
    DistillParams dist{g.find_param("bottleneck.distill.kernel"), g.find_param("bottleneck.distill.bias")};
    Tensor z3 = distill_layer(reshape(pam_grid, {16, 8}), dist);
    HcnnRemapParams remap{g.find_param("bottleneck.remap.weight")};
    Tensor remapped = hcnn_remap(z3, gd, gd, 1, remap);
    Tensor gfeat = resize_trilinear(reshape(remapped, {1, cb, gd, gd, 1}), gd, gd, gd);
    std::vector<Tensor> tap_feats{gfeat};
    Tensor f = cascade(gfeat, "bottleneck.climb0");
    tap_feats.push_back(f);

    for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t l = 1 - i;
        const std::string prefix = "dec" + std::to_string(l);
        Tensor up = cascade(f, prefix + ".up");
        GateParams gate{g.find_param(prefix + ".gate.W_x"), g.find_param(prefix + ".gate.W_g"),
                        g.find_param(prefix + ".gate.b_g"), g.find_param(prefix + ".gate.phi"),
                        g.find_param(prefix + ".gate.b_phi"), false};
        Tensor gated = attention_gate(skips[l], f, gate).gated;
        Tensor cat = concat({up, gated}, 1);
        MultiScaleBlockParams msb{g.find_param(prefix + ".msb.w31"), g.find_param(prefix + ".msb.b31"),
                                  g.find_param(prefix + ".msb.w32"), g.find_param(prefix + ".msb.b32"),
                                  g.find_param(prefix + ".msb.w41"), g.find_param(prefix + ".msb.b41"),
                                  g.find_param(prefix + ".msb.w42"), g.find_param(prefix + ".msb.b42"),
                                  g.find_param(prefix + ".msb.w_f"), g.find_param(prefix + ".msb.b_f")};
        f = multiscale_block(cat, msb);
        tap_feats.push_back(f);
    }

    std::vector<Tensor> tap_logits;
    tap_logits.push_back(conv3d(tap_feats[0], g.find_param("head.grid.weight"), g.find_param("head.grid.bias"), 1, 0));
    tap_logits.push_back(
        conv3d(tap_feats[1], g.find_param("head.bottleneck.weight"), g.find_param("head.bottleneck.bias"), 1, 0));
    tap_logits.push_back(conv3d(tap_feats[2], g.find_param("head.dec1.weight"), g.find_param("head.dec1.bias"), 1, 0));
    tap_logits.push_back(conv3d(tap_feats[3], g.find_param("head.dec0.weight"), g.find_param("head.dec0.bias"), 1, 0));
    FusionWeights fusion{g.find_param("fusion.weights")};
    Tensor fused = fuse_multiscale(tap_logits, fusion);

    REQUIRE(fused.size() == logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        REQUIRE_THAT(fused.data()[i], Catch::Matchers::WithinAbs(logits.data()[i], 1e-12));
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t i = 0; i < taps[m].size(); i += 7)
            REQUIRE_THAT(tap_logits[m].data()[i], Catch::Matchers::WithinAbs(taps[m].data()[i], 1e-12));
}

TEST_CASE("every parameter gradient of a full micro graph passes finite differences") {
    ModelGraph g = build_mpunet(tiny_config());
    g.find_param("bottleneck.pam.lambda").data()[0] = 0.3;  // exercise the attention mix path
    Tensor vol = random_volume(g.cfg, 16);
    Rng rng(17);
    Tensor mask = rand_uniform({2, 8, 8, 8}, rng, -1.0, 1.0);
    auto loss = [&] { return sum_all(mul(g.forward(vol, false), mask)); };
    std::vector<Tensor> all;
    for (const auto& p : g.params)
        if (p.trainable) all.push_back(p.tensor);
    // h = 1e-6 keeps the step inside the PReLU kink margin of this graph
    REQUIRE(fd_max_rel_error(loss, all, 1e-6) < 1e-4);
}
