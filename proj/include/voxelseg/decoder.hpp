#pragma once

#include "voxelseg/conv.hpp"
#include "voxelseg/patches.hpp"

namespace voxelseg {

// ---------------------------------------------------------------------------
// HCNN remap: [d,N] sequence -> channel grid -> 1x1x1 channel reduction

struct HcnnRemapParams {
    Tensor w;  // [target_channels, d, 1,1,1], bias-free
};

inline Tensor hcnn_remap(const Tensor& z, std::size_t grid_d, std::size_t grid_h, std::size_t grid_w,
                         const HcnnRemapParams& p) {
    require(z.rank() == 2, "hcnn_remap: sequence must be [d,N]");
    const std::size_t d = z.shape()[0];
    require(z.shape()[1] == grid_d * grid_h * grid_w, "hcnn_remap: sequence length " + std::to_string(z.shape()[1]) +
                                                          " does not match grid " +
                                                          shape_str({grid_d, grid_h, grid_w}));
    require(p.w.rank() == 5 && p.w.shape()[1] == d, "hcnn_remap: conv expects " + std::to_string(d) + " channels");
    const std::size_t target = p.w.shape()[0];
    Tensor grid = reshape(z, {1, d, grid_d, grid_h, grid_w});
    Tensor zero_bias = Tensor::zeros({target});
    return reshape(conv3d(grid, p.w, zero_bias), {target, grid_d, grid_h, grid_w});
}

// ---------------------------------------------------------------------------
// two-branch multi-scale block: per branch two stacked convolutions on
// distinct receptive fields, channel concat, 1x1x1 fusion. Purely affine.

struct MultiScaleBlockParams {
    Tensor w31, b31, w32, b32;  // branch 1
    Tensor w41, b41, w42, b42;  // branch 2, different receptive field
    Tensor w_f, b_f;            // fuse conv over the concatenated branches
};

inline MultiScaleBlockParams make_multiscale_block(std::size_t in_ch, std::size_t out_ch, Rng& rng,
                                                   std::size_t k1 = 3, std::size_t k2 = 5) {
    auto he = [&rng](std::size_t f, std::size_t c, std::size_t k) {
        const double bound = std::sqrt(2.0 / static_cast<double>(c * k * k * k));
        return rand_uniform({f, c, k, k, k}, rng, -bound, bound, true);
    };
    MultiScaleBlockParams p;
    p.w31 = he(out_ch, in_ch, k1);
    p.b31 = Tensor::zeros({out_ch}, true);
    p.w32 = he(out_ch, out_ch, k1);
    p.b32 = Tensor::zeros({out_ch}, true);
    p.w41 = he(out_ch, in_ch, k2);
    p.b41 = Tensor::zeros({out_ch}, true);
    p.w42 = he(out_ch, out_ch, k2);
    p.b42 = Tensor::zeros({out_ch}, true);
    p.w_f = he(out_ch, 2 * out_ch, 1);
    p.b_f = Tensor::zeros({out_ch}, true);
    return p;
}

namespace detail {
inline Tensor same_conv(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t k = w.shape()[2];
    require(k % 2 == 1, "multiscale_block: same padding requires odd kernels");
    return conv3d(x, w, b, 1, (k - 1) / 2);
}
}  // namespace detail

inline Tensor multiscale_block(const Tensor& input, const MultiScaleBlockParams& p) {
    require(input.rank() == 5, "multiscale_block: input must be [N,C,D,H,W]");
    require(p.w31.shape()[1] == input.shape()[1] && p.w41.shape()[1] == input.shape()[1],
            "multiscale_block: branch input channels do not match input");
    require(p.w_f.shape()[1] == p.w32.shape()[0] + p.w42.shape()[0],
            "multiscale_block: fuse input channels must equal the concatenated branch outputs");
    Tensor x1 = detail::same_conv(detail::same_conv(input, p.w31, p.b31), p.w32, p.b32);
    Tensor x2 = detail::same_conv(detail::same_conv(input, p.w41, p.b41), p.w42, p.b42);
    Tensor cat = concat({x1, x2}, 1);
    return detail::same_conv(cat, p.w_f, p.b_f);
}

// ---------------------------------------------------------------------------
// cascaded upsampler stage: upsample -> 2x2x2 same conv -> PReLU

struct CascadeStageParams {
    Tensor kernel;  // [out,in,2,2,2]
    Tensor bias;    // [out]
    Tensor prelu_slope;
    std::size_t factor = 2;
};

inline CascadeStageParams make_cascade_stage(std::size_t in_ch, std::size_t out_ch, std::size_t factor, Rng& rng) {
    const double bound = std::sqrt(2.0 / static_cast<double>(in_ch * 8));
    return {rand_uniform({out_ch, in_ch, 2, 2, 2}, rng, -bound, bound, true), Tensor::zeros({out_ch}, true),
            Tensor::scalar(0.25, true), factor};
}

inline Tensor cascaded_upsample_stage(const Tensor& x, const CascadeStageParams& p) {
    Tensor up = upsample_trilinear(x, p.factor);
    // even kernel: same padding puts the extra zero row after (0 before, 1 after)
    Tensor y = conv3d_pad(up, p.kernel, p.bias, 1, 0, 1);
    return prelu(y, p.prelu_slope);
}

// ---------------------------------------------------------------------------
// multi-scale output fusion (weighted average after trilinear resize)

struct FusionWeights {
    Tensor weights;  // one non-negative scalar per scale; normalized in the op
};

inline FusionWeights make_fusion_weights(std::size_t scales, bool learnable) {
    return {Tensor::full({scales}, 1.0 / static_cast<double>(scales), learnable)};
}

inline Tensor fuse_multiscale(const std::vector<Tensor>& outputs, const FusionWeights& w) {
    require(!outputs.empty() && outputs.size() <= 4, "fuse_multiscale: expected 1..4 scale outputs");
    require(w.weights.size() == outputs.size(), "fuse_multiscale: one weight per scale required");
    const Tensor& finest = outputs.back();
    require(finest.rank() == 5, "fuse_multiscale: outputs must be [N,C,D,H,W]");
    const std::size_t C = finest.shape()[1];
    std::size_t prev_voxels = 0;
    for (const Tensor& t : outputs) {
        require(t.rank() == 5 && t.shape()[1] == C, "fuse_multiscale: channel mismatch across scales");
        const std::size_t vox = t.shape()[2] * t.shape()[3] * t.shape()[4];
        require(vox > prev_voxels || outputs.size() == 1, "fuse_multiscale: resolutions must strictly increase");
        prev_voxels = vox;
    }
    double total = 0.0;
    for (double v : w.weights.data()) {
        require(v >= 0.0, "fuse_multiscale: weights must be non-negative");
        total += v;
    }
    require(total > 0.0, "fuse_multiscale: weights sum to zero");

    Tensor inv_total = reciprocal(sum_all(w.weights));
    Tensor acc;
    for (std::size_t m = 0; m < outputs.size(); ++m) {
        Tensor resized = outputs[m];
        if (outputs[m].shape() != finest.shape())
            resized = resize_trilinear(outputs[m], finest.shape()[2], finest.shape()[3], finest.shape()[4]);
        Tensor wm = slice_cols(reshape(w.weights, {1, w.weights.size()}), m, 1);
        Tensor term = scale_by(resized, reshape(wm, {1}));
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale_by(acc, reshape(inv_total, {1}));
}

}  // namespace voxelseg
