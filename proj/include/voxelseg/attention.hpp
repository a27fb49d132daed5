#pragma once

#include "voxelseg/conv.hpp"
#include "voxelseg/tensor.hpp"

namespace voxelseg {

// ---------------------------------------------------------------------------
// scaled dot-product multi-head attention over a [d,N] token sequence

struct MultiHeadWeights {
    Tensor W_Q, W_K, W_V;  // [d,d]
    Tensor W_out;          // [d,d]
    std::size_t n_heads = 1;
};

// Per head: A = softmax(Q_m K_m^T / sqrt(d_h)), output = concat(A_m V_m) W_out.
// When attention_out is given it receives each head's row-stochastic A.
inline Tensor multi_head_attention(const Tensor& z, const MultiHeadWeights& w,
                                   std::vector<Tensor>* attention_out = nullptr) {
    require(z.rank() == 2, "multi_head_attention: sequence must be [d,N]");
    const std::size_t d = z.shape()[0];
    require(w.n_heads >= 1 && d % w.n_heads == 0,
            "multi_head_attention: embedding dim " + std::to_string(d) + " not divisible by " +
                std::to_string(w.n_heads) + " heads");
    require(w.W_Q.shape() == Shape{d, d} && w.W_K.shape() == Shape{d, d} && w.W_V.shape() == Shape{d, d} &&
                w.W_out.shape() == Shape{d, d},
            "multi_head_attention: weight shapes must be [d,d]");
    const std::size_t dh = d / w.n_heads;

    Tensor zt = transpose2d(z);  // [N,d]
    Tensor Q = matmul(zt, w.W_Q);
    Tensor K = matmul(zt, w.W_K);
    Tensor V = matmul(zt, w.W_V);

    std::vector<Tensor> heads;
    heads.reserve(w.n_heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t m = 0; m < w.n_heads; ++m) {
        Tensor Qm = slice_cols(Q, m * dh, dh);
        Tensor Km = slice_cols(K, m * dh, dh);
        Tensor Vm = slice_cols(V, m * dh, dh);
        Tensor A = softmax(mul_scalar(matmul(Qm, transpose2d(Km)), scale), 1);
        if (attention_out) attention_out->push_back(A);
        heads.push_back(matmul(A, Vm));
    }
    Tensor spliced = heads.size() == 1 ? heads[0] : concat(heads, 1);
    return transpose2d(matmul(spliced, w.W_out));
}

// ---------------------------------------------------------------------------
// distilling layer: Conv1d(width 3, same) -> ELU -> MaxPool(2) over tokens

struct DistillParams {
    Tensor kernel;  // [d,d,3]
    Tensor bias;    // [d]
};

inline Tensor distill_layer(const Tensor& z, const DistillParams& p) {
    require(z.rank() == 2, "distill_layer: sequence must be [d,N]");
    const std::size_t d = z.shape()[0], N = z.shape()[1];
    require(N >= 1, "distill_layer: empty sequence");
    Tensor x = reshape(z, {1, d, N});
    Tensor y = elu(conv1d_same(x, p.kernel, p.bias));
    if (N % 2 == 1) y = replicate_pad_last(y, 1);  // odd length: pad by replication
    Tensor pooled = maxpool(y, 2, 1);
    return reshape(pooled, {d, pooled.shape()[2]});
}

// ---------------------------------------------------------------------------
// position attention module

struct PamState {
    Tensor bn_gamma, bn_beta;  // shared BatchNorm before the A/B/C convs
    RunningStats bn_stats;
    Tensor prelu_slope;
    Tensor conv_A, conv_B, conv_C;  // [C,C,1,1,1] channel-preserving convs
    Tensor bias_A, bias_B, bias_C;  // [C]
    Tensor lambda;                  // learnable blend, starts at exactly 0
    std::size_t position_cap = 32768;
};

inline PamState make_pam_state(std::size_t channels, Rng& rng) {
    PamState s;
    s.bn_gamma = Tensor::full({channels}, 1.0, true);
    s.bn_beta = Tensor::zeros({channels}, true);
    s.bn_stats = RunningStats::identity(channels);
    s.prelu_slope = Tensor::scalar(0.25, true);
    const double bound = std::sqrt(1.0 / static_cast<double>(channels));
    s.conv_A = rand_uniform({channels, channels, 1, 1, 1}, rng, -bound, bound, true);
    s.conv_B = rand_uniform({channels, channels, 1, 1, 1}, rng, -bound, bound, true);
    s.conv_C = rand_uniform({channels, channels, 1, 1, 1}, rng, -bound, bound, true);
    s.bias_A = Tensor::zeros({channels}, true);
    s.bias_B = Tensor::zeros({channels}, true);
    s.bias_C = Tensor::zeros({channels}, true);
    s.lambda = Tensor::scalar(0.0, true);
    return s;
}

// F_pam_i = lambda * sum_j s_ji C_j + F_i with S = softmax over source
// positions j for each output position i. affinity_out receives S when given.
inline Tensor pam_forward(const Tensor& F, PamState& state, bool training = false, Tensor* affinity_out = nullptr) {
    require(F.rank() == 4, "pam_forward: feature map must be [C,D,H,W]");
    const std::size_t C = F.shape()[0], D = F.shape()[1], H = F.shape()[2], W = F.shape()[3];
    const std::size_t P = D * H * W;
    require(P >= 1, "pam_forward: empty feature map");
    if (P > state.position_cap)
        throw ValueError("pam_forward: " + std::to_string(P) + " positions exceed the affinity cap of " +
                         std::to_string(state.position_cap) + " (quadratic memory)");

    Tensor x = reshape(F, {1, C, D, H, W});
    Tensor t = prelu(batchnorm(x, state.bn_gamma, state.bn_beta, state.bn_stats, training), state.prelu_slope);
    Tensor A = reshape(conv3d(t, state.conv_A, state.bias_A), {C, P});
    Tensor B = reshape(conv3d(t, state.conv_B, state.bias_B), {C, P});
    Tensor Cf = reshape(conv3d(t, state.conv_C, state.bias_C), {C, P});

    // L[i,j] = A_j . B_i
    Tensor logits = matmul(transpose2d(B), A);
    Tensor S = softmax(logits, 1);
    if (affinity_out) *affinity_out = S;
    Tensor mixed = reshape(transpose2d(matmul(S, transpose2d(Cf))), {C, D, H, W});
    return add(scale_by(mixed, state.lambda), F);
}

// ---------------------------------------------------------------------------
// additive attention gate on a skip connection

struct GateParams {
    Tensor W_x;    // [F_int, F_l, 1,1,1], no bias
    Tensor W_g;    // [F_int, F_g, 1,1,1]
    Tensor b_g;    // [F_int]
    Tensor phi;    // [1 or F_l, F_int, 1,1,1]
    Tensor b_phi;  // matches phi's filter count
    bool per_channel = false;
};

inline GateParams make_gate_params(std::size_t skip_channels, std::size_t gate_channels, std::size_t inter_channels,
                                   Rng& rng, bool per_channel = false) {
    require(inter_channels >= 1, "make_gate_params: F_int must be >= 1");
    GateParams p;
    const double bx = std::sqrt(1.0 / static_cast<double>(skip_channels));
    const double bg = std::sqrt(1.0 / static_cast<double>(gate_channels));
    const double bp = std::sqrt(1.0 / static_cast<double>(inter_channels));
    p.W_x = rand_uniform({inter_channels, skip_channels, 1, 1, 1}, rng, -bx, bx, true);
    p.W_g = rand_uniform({inter_channels, gate_channels, 1, 1, 1}, rng, -bg, bg, true);
    p.b_g = Tensor::zeros({inter_channels}, true);
    const std::size_t out = per_channel ? skip_channels : 1;
    p.phi = rand_uniform({out, inter_channels, 1, 1, 1}, rng, -bp, bp, true);
    p.b_phi = Tensor::zeros({out}, true);
    p.per_channel = per_channel;
    return p;
}

struct GateResult {
    Tensor gated;
    Tensor alpha;
};

// q = phi^T(relu(W_x^T x + W_g^T g + b_g)) + b_phi, alpha = sigmoid(q),
// output = x * alpha. g is resampled to x's grid by trilinear interpolation.
inline GateResult attention_gate(const Tensor& x_l, const Tensor& g, const GateParams& p) {
    require(x_l.rank() == 5 && g.rank() == 5, "attention_gate: inputs must be [N,C,D,H,W]");
    require(x_l.shape()[0] == g.shape()[0], "attention_gate: batch mismatch");
    require(p.W_x.shape()[1] == x_l.shape()[1], "attention_gate: skip channel count does not match W_x");
    require(p.W_g.shape()[1] == g.shape()[1], "attention_gate: gating channel count does not match W_g");

    Tensor g_r = g;
    if (g.shape()[2] != x_l.shape()[2] || g.shape()[3] != x_l.shape()[3] || g.shape()[4] != x_l.shape()[4])
        g_r = resize_trilinear(g, x_l.shape()[2], x_l.shape()[3], x_l.shape()[4]);

    Tensor zero_bx = Tensor::zeros({p.W_x.shape()[0]});
    Tensor pre = relu(add(conv3d(x_l, p.W_x, zero_bx), conv3d(g_r, p.W_g, p.b_g)));
    Tensor q = conv3d(pre, p.phi, p.b_phi);
    Tensor alpha = sigmoid(q);
    Tensor gated = p.per_channel ? mul(x_l, alpha) : mul_channel_broadcast(x_l, alpha);
    return {gated, alpha};
}

}  // namespace voxelseg
