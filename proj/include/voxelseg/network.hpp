#pragma once

#include <array>

#include "voxelseg/attention.hpp"
#include "voxelseg/decoder.hpp"
#include "voxelseg/patches.hpp"

namespace voxelseg {

// Hyperparameters that build a network. With all three feature flags off the
// graph is the plain 3D U-Net baseline.
struct ModelConfig {
    std::size_t input_channels = 1;
    std::size_t classes = 2;
    std::size_t levels = 4;
    std::size_t base_channels = 8;
    std::size_t patch_size = 2;  // P
    std::size_t embed_dim = 16;  // d
    std::size_t n_heads = 2;
    bool use_pam = true;
    bool use_gates = true;
    bool use_multiscale = true;
    bool fusion_learnable = false;
    bool gate_per_channel = false;
    std::size_t upsample_factor = 2;
    std::size_t pam_position_cap = 32768;
    std::array<std::size_t, 3> input_size = {32, 32, 32};  // D,H,W
    std::uint64_t seed = 0;

    std::size_t channels_at(std::size_t level) const { return base_channels << level; }

    std::size_t spatial_divisor() const {
        return (std::size_t{1} << (levels - 1)) * (use_pam ? patch_size : 1);
    }

    bool baseline() const { return !use_pam && !use_gates && !use_multiscale; }

    void validate() const {
        if (levels < 2) throw ConfigError("model: levels must be >= 2");
        if (base_channels < 1) throw ConfigError("model: base_channels must be >= 1");
        if (classes < 2) throw ConfigError("model: classes must be >= 2");
        if (input_channels < 1) throw ConfigError("model: input_channels must be >= 1");
        if (n_heads < 1 || embed_dim % n_heads != 0)
            throw ConfigError("model: embed_dim must be divisible by n_heads");
        if (patch_size < 1 || (patch_size & (patch_size - 1)) != 0)
            throw ConfigError("model: patch_size must be a power of two");
        if (upsample_factor != 2)
            throw ConfigError("model: upsample_factor must be 2; the decoder has to double resolution per level "
                              "to meet its skip connection");
        for (std::size_t e : input_size)
            if (e % spatial_divisor() != 0)
                throw ConfigError("model: resolution " + std::to_string(e) + " not divisible by 2^(levels-1)*P = " +
                                  std::to_string(spatial_divisor()));
    }
};

struct NamedParam {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

namespace detail {

struct ConvBn {
    Tensor w, b, gamma, beta;  // 3^3 same conv followed by batchnorm + relu
    RunningStats stats;

    Tensor forward(const Tensor& x, bool training) {
        return relu(batchnorm(conv3d(x, w, b, 1, 1), gamma, beta, stats, training));
    }
};

}  // namespace detail

// The assembled network: parameter tensors plus wiring. Forward taps are the
// per-resolution class-logit outputs, coarsest first.
class ModelGraph {
public:
    ModelConfig cfg;

    struct EncoderLevel {
        detail::ConvBn conv1, conv2;
    };
    struct DecoderLevel {
        CascadeStageParams up;       // multiscale path
        GateParams gate;             // gated path
        MultiScaleBlockParams msb;   // multiscale path
        detail::ConvBn conv1, conv2; // baseline path
        Tensor head_w, head_b;       // tap head, multiscale path
        bool has_head = false;
    };

    std::vector<EncoderLevel> encoder;

    PatchEmbedding embedding;
    MultiHeadWeights mha;
    PamState pam;
    DistillParams distill;
    HcnnRemapParams remap;
    std::vector<CascadeStageParams> climb;

    std::vector<DecoderLevel> decoder;  // index l = target level, built coarsest first
    Tensor grid_head_w, grid_head_b;    // tap at the patch grid
    bool has_grid_head = false;
    Tensor bottleneck_head_w, bottleneck_head_b;
    bool has_bottleneck_head = false;
    Tensor final_head_w, final_head_b;  // baseline single head
    FusionWeights fusion;

    std::vector<NamedParam> params;

    const Tensor& find_param(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return p.tensor;
        throw ValueError("no parameter named '" + name + "'");
    }

    std::size_t count_parameters() const {
        std::size_t n = 0;
        for (const auto& p : params)
            if (p.trainable) n += p.tensor.size();
        return n;
    }

    // Forward pass on a [C,D,H,W] volume. Returns class logits [classes,D,H,W];
    // taps_out (when given) receives the per-scale logit maps coarsest first.
    Tensor forward(const Tensor& volume, bool training = false, std::vector<Tensor>* taps_out = nullptr) {
        require(volume.rank() == 4, "forward: volume must be [C,D,H,W]");
        require(volume.shape()[0] == cfg.input_channels, "forward: expected " + std::to_string(cfg.input_channels) +
                                                             " input channels, got " +
                                                             std::to_string(volume.shape()[0]));
        const std::size_t D = volume.shape()[1], H = volume.shape()[2], W = volume.shape()[3];
        for (std::size_t e : {D, H, W})
            require(e % cfg.spatial_divisor() == 0, "forward: resolution " + std::to_string(e) +
                                                        " not divisible by " + std::to_string(cfg.spatial_divisor()));
        if (cfg.use_pam)
            require(D == cfg.input_size[0] && H == cfg.input_size[1] && W == cfg.input_size[2],
                    "forward: the position embedding fixes the input resolution to " +
                        shape_str({cfg.input_size[0], cfg.input_size[1], cfg.input_size[2]}) + ", got " +
                        shape_str({D, H, W}));

        Tensor x = reshape(volume, {1, cfg.input_channels, D, H, W});
        std::vector<Tensor> skips;
        for (std::size_t l = 0; l < cfg.levels; ++l) {
            if (l > 0) x = maxpool(x, 2, 3);
            x = encoder[l].conv1.forward(x, training);
            x = encoder[l].conv2.forward(x, training);
            skips.push_back(x);
        }

        std::vector<Tensor> tap_feats;  // coarsest first, logits made below
        Tensor f = skips.back();
        const std::size_t cb = cfg.channels_at(cfg.levels - 1);
        if (cfg.use_pam) {
            const std::size_t bd = D >> (cfg.levels - 1), bh = H >> (cfg.levels - 1), bw = W >> (cfg.levels - 1);
            const std::size_t P = cfg.patch_size;
            const std::size_t gd = bd / P, gh = bh / P, gw = bw / P;
            PatchSequence seq = patchify(reshape(f, {cb, bd, bh, bw}), P);
            Tensor z = embed(seq, embedding);
            z = multi_head_attention(z, mha);
            Tensor grid = reshape_sequence_to_grid(z, P, bd, bh, bw);
            Tensor pam_grid = pam_forward(reshape(grid, {cfg.embed_dim, gd, gh, gw}), pam, training);
            Tensor z2 = reshape(pam_grid, {cfg.embed_dim, gd * gh * gw});
            Tensor z3 = distill_layer(z2, distill);
            const std::size_t gw2 = gd * gh * gw == 1 ? 1 : gw / 2;
            Tensor remapped = hcnn_remap(z3, gd, gh, gw2, remap);
            Tensor g = reshape(remapped, {1, cb, gd, gh, gw2});
            if (gw2 != gw) g = resize_trilinear(g, gd, gh, gw);  // undo the distilling pool along W
            if (cfg.use_multiscale && has_grid_head) tap_feats.push_back(g);
            for (auto& stage : climb) g = cascaded_upsample_stage(g, stage);
            f = g;
        }
        if (cfg.use_multiscale && has_bottleneck_head) tap_feats.push_back(f);

        for (std::size_t i = 0; i < decoder.size(); ++i) {
            const std::size_t l = cfg.levels - 2 - i;
            DecoderLevel& dec = decoder[i];
            Tensor gate_signal = f;
            Tensor up = cfg.use_multiscale ? cascaded_upsample_stage(f, dec.up) : upsample_trilinear(f, 2);
            Tensor skip = skips[l];
            if (cfg.use_gates) skip = attention_gate(skip, gate_signal, dec.gate).gated;
            Tensor cat = concat({up, skip}, 1);
            if (cfg.use_multiscale) {
                f = multiscale_block(cat, dec.msb);
            } else {
                f = dec.conv1.forward(cat, training);
                f = dec.conv2.forward(f, training);
            }
            if (cfg.use_multiscale && dec.has_head) tap_feats.push_back(f);
        }

        Tensor logits;
        std::vector<Tensor> tap_logits;
        if (cfg.use_multiscale) {
            std::size_t fi = 0;
            if (has_grid_head) tap_logits.push_back(apply_head(tap_feats[fi++], grid_head_w, grid_head_b));
            if (has_bottleneck_head)
                tap_logits.push_back(apply_head(tap_feats[fi++], bottleneck_head_w, bottleneck_head_b));
            for (std::size_t i = 0; i < decoder.size(); ++i)
                if (decoder[i].has_head) tap_logits.push_back(apply_head(tap_feats[fi++], decoder[i].head_w, decoder[i].head_b));
            logits = fuse_multiscale(tap_logits, fusion);
        } else {
            logits = apply_head(f, final_head_w, final_head_b);
            tap_logits.push_back(logits);
        }
        if (taps_out) *taps_out = tap_logits;
        return reshape(logits, {cfg.classes, D, H, W});
    }

private:
    static Tensor apply_head(const Tensor& feat, const Tensor& w, const Tensor& b) {
        return conv3d(feat, w, b, 1, 0);
    }
};

namespace detail {

class GraphBuilder {
public:
    GraphBuilder(ModelGraph& g, Rng& rng) : g_(g), rng_(rng) {}

    Tensor conv_weight(const std::string& name, std::size_t f, std::size_t c, std::size_t k) {
        const double bound = std::sqrt(2.0 / static_cast<double>(c * k * k * k));
        return track(name, rand_uniform({f, c, k, k, k}, rng_, -bound, bound, true));
    }
    Tensor zeros_param(const std::string& name, Shape shape) {
        return track(name, Tensor::zeros(std::move(shape), true));
    }
    Tensor ones_param(const std::string& name, Shape shape) {
        return track(name, Tensor::full(std::move(shape), 1.0, true));
    }
    Tensor scalar_param(const std::string& name, double v) { return track(name, Tensor::scalar(v, true)); }

    ConvBn conv_bn(const std::string& prefix, std::size_t in_ch, std::size_t out_ch) {
        ConvBn cb;
        cb.w = conv_weight(prefix + ".conv.weight", out_ch, in_ch, 3);
        cb.b = zeros_param(prefix + ".conv.bias", {out_ch});
        cb.gamma = ones_param(prefix + ".bn.gamma", {out_ch});
        cb.beta = zeros_param(prefix + ".bn.beta", {out_ch});
        cb.stats = RunningStats::identity(out_ch);
        buffer(prefix + ".bn.running_mean", cb.stats.mean);
        buffer(prefix + ".bn.running_var", cb.stats.var);
        return cb;
    }

    CascadeStageParams cascade(const std::string& prefix, std::size_t in_ch, std::size_t out_ch) {
        CascadeStageParams p;
        p.kernel = conv_weight(prefix + ".conv.weight", out_ch, in_ch, 2);
        p.bias = zeros_param(prefix + ".conv.bias", {out_ch});
        p.prelu_slope = scalar_param(prefix + ".prelu", 0.25);
        p.factor = 2;
        return p;
    }

    Tensor track(const std::string& name, Tensor t) {
        push(name, t, true);
        return t;
    }
    void buffer(const std::string& name, Tensor t) { push(name, t, false); }

private:
    void push(const std::string& name, Tensor t, bool trainable) {
        for (const auto& p : g_.params)
            if (p.name == name) throw ValueError("duplicate parameter name '" + name + "'");
        g_.params.push_back({name, t, trainable});
    }

    ModelGraph& g_;
    Rng& rng_;
};

}  // namespace detail

inline ModelGraph build_mpunet(const ModelConfig& cfg) {
    cfg.validate();
    ModelGraph g;
    g.cfg = cfg;
    Rng rng(cfg.seed);
    detail::GraphBuilder b(g, rng);

    for (std::size_t l = 0; l < cfg.levels; ++l) {
        const std::size_t in_ch = l == 0 ? cfg.input_channels : cfg.channels_at(l - 1);
        const std::size_t out_ch = cfg.channels_at(l);
        ModelGraph::EncoderLevel lev;
        lev.conv1 = b.conv_bn("enc" + std::to_string(l) + ".block1", in_ch, out_ch);
        lev.conv2 = b.conv_bn("enc" + std::to_string(l) + ".block2", out_ch, out_ch);
        g.encoder.push_back(std::move(lev));
    }

    const std::size_t cb = cfg.channels_at(cfg.levels - 1);
    std::size_t n_tokens = 0;
    if (cfg.use_pam) {
        const std::size_t bd = cfg.input_size[0] >> (cfg.levels - 1);
        const std::size_t bh = cfg.input_size[1] >> (cfg.levels - 1);
        const std::size_t bw = cfg.input_size[2] >> (cfg.levels - 1);
        const std::size_t P = cfg.patch_size;
        const std::size_t gd = bd / P, gh = bh / P, gw = bw / P;
        n_tokens = gd * gh * gw;
        if (n_tokens > 1 && gw % 2 != 0)
            throw ConfigError("model: the distilling layer pools the token sequence along W; the patch grid W "
                              "extent must be even (got " +
                              std::to_string(gw) + ")");
        const std::size_t token_len = P * P * P * cb;
        const double xb = std::sqrt(6.0 / static_cast<double>(token_len + cfg.embed_dim));
        g.embedding.W = b.track("bottleneck.embed.W", rand_uniform({token_len, cfg.embed_dim}, rng, -xb, xb, true));
        g.embedding.E_pos =
            b.track("bottleneck.embed.E_pos", rand_normal({cfg.embed_dim, n_tokens}, rng, 0.0, 0.02, true));
        g.embedding.patch = P;
        g.embedding.dim = cfg.embed_dim;

        const double ab = std::sqrt(1.0 / static_cast<double>(cfg.embed_dim));
        for (auto [nm, slot] : {std::pair<const char*, Tensor*>{"W_Q", &g.mha.W_Q}, {"W_K", &g.mha.W_K},
                                {"W_V", &g.mha.W_V}, {"W_out", &g.mha.W_out}})
            *slot = b.track(std::string("bottleneck.mha.") + nm,
                            rand_uniform({cfg.embed_dim, cfg.embed_dim}, rng, -ab, ab, true));
        g.mha.n_heads = cfg.n_heads;

        g.pam.bn_gamma = b.ones_param("bottleneck.pam.bn.gamma", {cfg.embed_dim});
        g.pam.bn_beta = b.zeros_param("bottleneck.pam.bn.beta", {cfg.embed_dim});
        g.pam.bn_stats = RunningStats::identity(cfg.embed_dim);
        b.buffer("bottleneck.pam.bn.running_mean", g.pam.bn_stats.mean);
        b.buffer("bottleneck.pam.bn.running_var", g.pam.bn_stats.var);
        g.pam.prelu_slope = b.scalar_param("bottleneck.pam.prelu", 0.25);
        g.pam.conv_A = b.conv_weight("bottleneck.pam.conv_A.weight", cfg.embed_dim, cfg.embed_dim, 1);
        g.pam.bias_A = b.zeros_param("bottleneck.pam.conv_A.bias", {cfg.embed_dim});
        g.pam.conv_B = b.conv_weight("bottleneck.pam.conv_B.weight", cfg.embed_dim, cfg.embed_dim, 1);
        g.pam.bias_B = b.zeros_param("bottleneck.pam.conv_B.bias", {cfg.embed_dim});
        g.pam.conv_C = b.conv_weight("bottleneck.pam.conv_C.weight", cfg.embed_dim, cfg.embed_dim, 1);
        g.pam.bias_C = b.zeros_param("bottleneck.pam.conv_C.bias", {cfg.embed_dim});
        g.pam.lambda = b.scalar_param("bottleneck.pam.lambda", 0.0);  // learned from 0
        g.pam.position_cap = cfg.pam_position_cap;

        const double db = std::sqrt(1.0 / static_cast<double>(cfg.embed_dim * 3));
        g.distill.kernel =
            b.track("bottleneck.distill.kernel", rand_uniform({cfg.embed_dim, cfg.embed_dim, 3}, rng, -db, db, true));
        g.distill.bias = b.zeros_param("bottleneck.distill.bias", {cfg.embed_dim});

        g.remap.w = b.conv_weight("bottleneck.remap.weight", cb, cfg.embed_dim, 1);

        std::size_t stages = 0;
        for (std::size_t p = cfg.patch_size; p > 1; p /= 2) ++stages;
        for (std::size_t s = 0; s < stages; ++s)
            g.climb.push_back(b.cascade("bottleneck.climb" + std::to_string(s), cb, cb));
    }

    // choose up to four tap resolutions, finest preferred: decoder levels
    // first, then the bottleneck, then the patch grid
    std::size_t tap_budget = 4;
    std::vector<bool> level_tap(cfg.levels - 1, false);
    bool bottleneck_tap = false, grid_tap = false;
    if (cfg.use_multiscale) {
        for (std::size_t l = 0; l < cfg.levels - 1 && tap_budget > 0; ++l, --tap_budget) level_tap[l] = true;
        if (tap_budget > 0) {
            bottleneck_tap = true;
            --tap_budget;
        }
        if (tap_budget > 0 && cfg.use_pam) {
            grid_tap = true;
            --tap_budget;
        }
    }

    if (grid_tap) {
        g.grid_head_w = b.conv_weight("head.grid.weight", cfg.classes, cb, 1);
        g.grid_head_b = b.zeros_param("head.grid.bias", {cfg.classes});
        g.has_grid_head = true;
    }
    if (bottleneck_tap) {
        g.bottleneck_head_w = b.conv_weight("head.bottleneck.weight", cfg.classes, cb, 1);
        g.bottleneck_head_b = b.zeros_param("head.bottleneck.bias", {cfg.classes});
        g.has_bottleneck_head = true;
    }

    for (std::size_t i = 0; i + 1 < cfg.levels; ++i) {
        const std::size_t l = cfg.levels - 2 - i;  // target level, coarsest first
        const std::size_t c_l = cfg.channels_at(l);
        const std::size_t c_up = cfg.channels_at(l + 1);
        const std::string prefix = "dec" + std::to_string(l);
        ModelGraph::DecoderLevel dec;
        std::size_t cat_ch;
        if (cfg.use_multiscale) {
            dec.up = b.cascade(prefix + ".up", c_up, c_l);
            cat_ch = 2 * c_l;
        } else {
            cat_ch = c_up + c_l;
        }
        if (cfg.use_gates) {
            const std::size_t f_int = std::max<std::size_t>(1, c_l / 2);
            dec.gate.W_x = b.conv_weight(prefix + ".gate.W_x", f_int, c_l, 1);
            dec.gate.W_g = b.conv_weight(prefix + ".gate.W_g", f_int, c_up, 1);
            dec.gate.b_g = b.zeros_param(prefix + ".gate.b_g", {f_int});
            const std::size_t gate_out = cfg.gate_per_channel ? c_l : 1;
            dec.gate.phi = b.conv_weight(prefix + ".gate.phi", gate_out, f_int, 1);
            dec.gate.b_phi = b.zeros_param(prefix + ".gate.b_phi", {gate_out});
            dec.gate.per_channel = cfg.gate_per_channel;
        }
        if (cfg.use_multiscale) {
            dec.msb.w31 = b.conv_weight(prefix + ".msb.w31", c_l, cat_ch, 3);
            dec.msb.b31 = b.zeros_param(prefix + ".msb.b31", {c_l});
            dec.msb.w32 = b.conv_weight(prefix + ".msb.w32", c_l, c_l, 3);
            dec.msb.b32 = b.zeros_param(prefix + ".msb.b32", {c_l});
            dec.msb.w41 = b.conv_weight(prefix + ".msb.w41", c_l, cat_ch, 5);
            dec.msb.b41 = b.zeros_param(prefix + ".msb.b41", {c_l});
            dec.msb.w42 = b.conv_weight(prefix + ".msb.w42", c_l, c_l, 5);
            dec.msb.b42 = b.zeros_param(prefix + ".msb.b42", {c_l});
            dec.msb.w_f = b.conv_weight(prefix + ".msb.w_f", c_l, 2 * c_l, 1);
            dec.msb.b_f = b.zeros_param(prefix + ".msb.b_f", {c_l});
        } else {
            dec.conv1 = b.conv_bn(prefix + ".block1", cat_ch, c_l);
            dec.conv2 = b.conv_bn(prefix + ".block2", c_l, c_l);
        }
        if (level_tap[l]) {
            dec.head_w = b.conv_weight("head." + prefix + ".weight", cfg.classes, c_l, 1);
            dec.head_b = b.zeros_param("head." + prefix + ".bias", {cfg.classes});
            dec.has_head = true;
        }
        g.decoder.push_back(std::move(dec));
    }

    if (cfg.use_multiscale) {
        std::size_t n_taps = (grid_tap ? 1 : 0) + (bottleneck_tap ? 1 : 0);
        for (bool t : level_tap) n_taps += t ? 1 : 0;
        g.fusion = make_fusion_weights(n_taps, cfg.fusion_learnable);
        if (cfg.fusion_learnable)
            b.track("fusion.weights", g.fusion.weights);
        else
            b.buffer("fusion.weights", g.fusion.weights);
    } else {
        g.final_head_w = b.conv_weight("head.final.weight", cfg.classes, cfg.base_channels, 1);
        g.final_head_b = b.zeros_param("head.final.bias", {cfg.classes});
    }
    return g;
}

// The benchmark 3D U-Net: the same contracting/expanding skeleton with every
// feature flag forced off.
inline ModelGraph build_unet3d(ModelConfig cfg) {
    cfg.use_pam = false;
    cfg.use_gates = false;
    cfg.use_multiscale = false;
    return build_mpunet(cfg);
}

// ---------------------------------------------------------------------------
// config <-> key=value lines (checkpoint echo, run config echo)

inline std::string model_config_to_kv(const ModelConfig& c) {
    std::ostringstream os;
    os << "model.input_channels=" << c.input_channels << "\n";
    os << "model.classes=" << c.classes << "\n";
    os << "model.levels=" << c.levels << "\n";
    os << "model.base_channels=" << c.base_channels << "\n";
    os << "model.patch_size=" << c.patch_size << "\n";
    os << "model.embed_dim=" << c.embed_dim << "\n";
    os << "model.n_heads=" << c.n_heads << "\n";
    os << "model.use_pam=" << (c.use_pam ? 1 : 0) << "\n";
    os << "model.use_gates=" << (c.use_gates ? 1 : 0) << "\n";
    os << "model.use_multiscale=" << (c.use_multiscale ? 1 : 0) << "\n";
    os << "model.fusion_learnable=" << (c.fusion_learnable ? 1 : 0) << "\n";
    os << "model.gate_per_channel=" << (c.gate_per_channel ? 1 : 0) << "\n";
    os << "model.upsample_factor=" << c.upsample_factor << "\n";
    os << "model.pam_position_cap=" << c.pam_position_cap << "\n";
    os << "model.input_size=" << c.input_size[0] << "x" << c.input_size[1] << "x" << c.input_size[2] << "\n";
    os << "model.seed=" << c.seed << "\n";
    return os.str();
}

inline void model_config_apply_kv(ModelConfig& c, const std::string& key, const std::string& value) {
    auto as_size = [&] { return static_cast<std::size_t>(std::stoull(value)); };
    auto as_bool = [&] { return value == "1" || value == "true"; };
    if (key == "model.input_channels")
        c.input_channels = as_size();
    else if (key == "model.classes")
        c.classes = as_size();
    else if (key == "model.levels")
        c.levels = as_size();
    else if (key == "model.base_channels")
        c.base_channels = as_size();
    else if (key == "model.patch_size")
        c.patch_size = as_size();
    else if (key == "model.embed_dim")
        c.embed_dim = as_size();
    else if (key == "model.n_heads")
        c.n_heads = as_size();
    else if (key == "model.use_pam")
        c.use_pam = as_bool();
    else if (key == "model.use_gates")
        c.use_gates = as_bool();
    else if (key == "model.use_multiscale")
        c.use_multiscale = as_bool();
    else if (key == "model.fusion_learnable")
        c.fusion_learnable = as_bool();
    else if (key == "model.gate_per_channel")
        c.gate_per_channel = as_bool();
    else if (key == "model.upsample_factor")
        c.upsample_factor = as_size();
    else if (key == "model.pam_position_cap")
        c.pam_position_cap = as_size();
    else if (key == "model.seed")
        c.seed = std::stoull(value);
    else if (key == "model.input_size") {
        std::size_t a = 0, b = 0, d = 0;
        if (std::sscanf(value.c_str(), "%zux%zux%zu", &a, &b, &d) != 3)
            throw ConfigError("model.input_size must look like DxHxW");
        c.input_size = {a, b, d};
    } else
        throw ConfigError("unknown model config key '" + key + "'");
}

}  // namespace voxelseg
