#pragma once

#include "voxelseg/tensor.hpp"

namespace voxelseg {

// Flat patch sequence over a [C,D,H,W] volume. Tokens are raster ordered over
// the patch grid (depth slowest, then height, then width); within a token the
// layout is channel-major (c, dz, dy, dx).
struct PatchSequence {
    Tensor tokens;  // [N, P^3*C]
    std::size_t patch = 0;
    std::size_t C = 0, D = 0, H = 0, W = 0;  // source volume extents

    std::size_t grid_d() const { return D / patch; }
    std::size_t grid_h() const { return H / patch; }
    std::size_t grid_w() const { return W / patch; }
    std::size_t count() const { return grid_d() * grid_h() * grid_w(); }
};

// Learnable projection into d-dimensional token space plus a per-token
// position embedding. E_pos pins the sequence length, so a built embedding
// only accepts the resolution it was created for.
struct PatchEmbedding {
    Tensor W;      // [P^3*C, d]
    Tensor E_pos;  // [d, N]
    std::size_t patch = 0;
    std::size_t dim = 0;
};

inline PatchSequence patchify(const Tensor& volume, std::size_t P) {
    require(volume.rank() == 4, "patchify: volume must be [C,D,H,W]");
    require(P >= 1, "patchify: patch size must be >= 1");
    const std::size_t C = volume.shape()[0], D = volume.shape()[1], H = volume.shape()[2], W = volume.shape()[3];
    require(D % P == 0 && H % P == 0 && W % P == 0,
            "patchify: extents " + shape_str({D, H, W}) + " not divisible by patch size " + std::to_string(P));
    const std::size_t GD = D / P, GH = H / P, GW = W / P;
    const std::size_t N = GD * GH * GW;
    const std::size_t token_len = P * P * P * C;

    Tensor tokens = Tensor::zeros({N, token_len}, volume.requires_grad());
    const double* v = volume.data().data();
    double* t = tokens.data().data();
    for (std::size_t pz = 0; pz < GD; ++pz)
        for (std::size_t py = 0; py < GH; ++py)
            for (std::size_t px = 0; px < GW; ++px) {
                const std::size_t token = (pz * GH + py) * GW + px;
                double* dst = t + token * token_len;
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t dz = 0; dz < P; ++dz)
                        for (std::size_t dy = 0; dy < P; ++dy)
                            for (std::size_t dx = 0; dx < P; ++dx)
                                *dst++ = v[((c * D + pz * P + dz) * H + py * P + dy) * W + px * P + dx];
            }
    detail::record_if_needed(tokens, [volume, tokens, C, D, H, W, P, GD, GH, GW, token_len]() mutable {
        const auto& g = tokens.grad();
        auto& gv = volume.grad();
        for (std::size_t pz = 0; pz < GD; ++pz)
            for (std::size_t py = 0; py < GH; ++py)
                for (std::size_t px = 0; px < GW; ++px) {
                    const std::size_t token = (pz * GH + py) * GW + px;
                    const double* src = g.data() + token * token_len;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t dz = 0; dz < P; ++dz)
                            for (std::size_t dy = 0; dy < P; ++dy)
                                for (std::size_t dx = 0; dx < P; ++dx)
                                    gv[((c * D + pz * P + dz) * H + py * P + dy) * W + px * P + dx] += *src++;
                }
    });
    return PatchSequence{tokens, P, C, D, H, W};
}

// Exact inverse of patchify.
inline Tensor unpatchify(const PatchSequence& seq) {
    require(seq.patch >= 1 && seq.C >= 1, "unpatchify: corrupted source shape record");
    const std::size_t P = seq.patch, C = seq.C, D = seq.D, H = seq.H, W = seq.W;
    require(D % P == 0 && H % P == 0 && W % P == 0, "unpatchify: corrupted source shape record");
    const std::size_t GD = D / P, GH = H / P, GW = W / P;
    const std::size_t token_len = P * P * P * C;
    require(seq.tokens.shape() == Shape{GD * GH * GW, token_len}, "unpatchify: token matrix does not match source shape");

    Tensor volume = Tensor::zeros({C, D, H, W}, seq.tokens.requires_grad());
    const double* t = seq.tokens.data().data();
    double* v = volume.data().data();
    for (std::size_t pz = 0; pz < GD; ++pz)
        for (std::size_t py = 0; py < GH; ++py)
            for (std::size_t px = 0; px < GW; ++px) {
                const std::size_t token = (pz * GH + py) * GW + px;
                const double* src = t + token * token_len;
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t dz = 0; dz < P; ++dz)
                        for (std::size_t dy = 0; dy < P; ++dy)
                            for (std::size_t dx = 0; dx < P; ++dx)
                                v[((c * D + pz * P + dz) * H + py * P + dy) * W + px * P + dx] = *src++;
            }
    Tensor tokens = seq.tokens;
    detail::record_if_needed(volume, [tokens, volume, C, D, H, W, P, GD, GH, GW, token_len]() mutable {
        const auto& g = volume.grad();
        auto& gt = tokens.grad();
        for (std::size_t pz = 0; pz < GD; ++pz)
            for (std::size_t py = 0; py < GH; ++py)
                for (std::size_t px = 0; px < GW; ++px) {
                    const std::size_t token = (pz * GH + py) * GW + px;
                    double* dst = gt.data() + token * token_len;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t dz = 0; dz < P; ++dz)
                            for (std::size_t dy = 0; dy < P; ++dy)
                                for (std::size_t dx = 0; dx < P; ++dx)
                                    *dst++ += g[((c * D + pz * P + dz) * H + py * P + dy) * W + px * P + dx];
                }
    });
    return volume;
}

// z0 = W^T X^T + E_pos, a [d,N] feature map.
inline Tensor embed(const PatchSequence& seq, const PatchEmbedding& emb) {
    const std::size_t token_len = seq.patch * seq.patch * seq.patch * seq.C;
    require(emb.W.rank() == 2 && emb.W.shape()[0] == token_len,
            "embed: projection rows " + shape_str(emb.W.shape()) + " do not match token length " +
                std::to_string(token_len));
    require(emb.W.shape()[1] == emb.dim, "embed: projection columns do not match embedding dim");
    require(emb.E_pos.shape() == Shape{emb.dim, seq.count()},
            "embed: position embedding " + shape_str(emb.E_pos.shape()) + " does not match sequence length " +
                std::to_string(seq.count()) + " (resolution is fixed by the built embedding)");
    return add(matmul(transpose2d(emb.W), transpose2d(seq.tokens)), emb.E_pos);
}

// [d,N] sequence back to a [d, D/P, H/P, W/P] grid; pure reshape since the
// token order is the grid raster order.
inline Tensor reshape_sequence_to_grid(const Tensor& z, std::size_t P, std::size_t D, std::size_t H, std::size_t W) {
    require(z.rank() == 2, "reshape_sequence_to_grid: sequence must be [d,N]");
    require(P >= 1 && D % P == 0 && H % P == 0 && W % P == 0, "reshape_sequence_to_grid: grid does not divide");
    const std::size_t GD = D / P, GH = H / P, GW = W / P;
    require(z.shape()[1] == GD * GH * GW, "reshape_sequence_to_grid: sequence length " + std::to_string(z.shape()[1]) +
                                              " does not match grid " + shape_str({GD, GH, GW}));
    return reshape(z, {z.shape()[0], GD, GH, GW});
}

}  // namespace voxelseg
