#pragma once

#include "voxelseg/conv.hpp"
#include "voxelseg/tensor.hpp"

namespace voxelseg {

struct LossConfig {
    double tversky_alpha = 0.3;  // false-positive weight
    double tversky_beta = 0.7;   // false-negative weight
    double ce_weight = 1.0;      // lambda on the multi-scale cross-entropy term
    double epsilon = 1e-7;

    void validate() const {
        if (!(tversky_alpha > 0.0) || !(tversky_beta > 0.0))
            throw ConfigError("loss: tversky alpha and beta must be positive");
        if (!(epsilon > 0.0) || epsilon > 1e-3) throw ConfigError("loss: epsilon must lie in (0, 1e-3]");
        if (ce_weight < 0.0) throw ConfigError("loss: ce_weight must be non-negative");
    }
};

namespace detail {
inline void check_probability_range(const Tensor& P) {
    for (double v : P.data())
        if (v < -1e-9 || v > 1.0 + 1e-9) throw ValueError("loss: probability outside [0,1]");
}
inline Tensor one_minus(const Tensor& t) { return add_scalar(mul_scalar(t, -1.0), 1.0); }
}  // namespace detail

// 1 - sum(P1 G1) / (sum(P1 G1) + alpha sum(P1 G0) + beta sum(P0 G1) + eps),
// foreground = class 1. P holds foreground probabilities, G the binary mask.
inline Tensor tversky_term(const Tensor& P, const Tensor& G, double alpha, double beta, double epsilon) {
    require(P.shape() == G.shape(), "tversky_term: prediction and truth shapes differ");
    detail::check_probability_range(P);
    for (double v : G.data())
        if (v != 0.0 && v != 1.0) throw ValueError("tversky_term: ground truth must be one-hot binary");

    Tensor overlap = sum_all(mul(P, G));                        // P1 G1
    Tensor false_pos = sum_all(mul(P, detail::one_minus(G)));   // P1 G0
    Tensor false_neg = sum_all(mul(detail::one_minus(P), G));   // P0 G1
    Tensor den = add_scalar(add(overlap, add(mul_scalar(false_pos, alpha), mul_scalar(false_neg, beta))), epsilon);
    return add_scalar(mul_scalar(mul(overlap, reciprocal(den)), -1.0), 1.0);
}

// Mean-per-voxel binary cross-entropy of each scale's foreground probability
// map against the mask, summed over scales. Taps below the mask resolution
// are resized trilinearly first; probabilities are clamped to [eps, 1-eps].
inline Tensor multiscale_cross_entropy(const std::vector<Tensor>& taps, const Tensor& G, double epsilon) {
    require(!taps.empty(), "multiscale_cross_entropy: no scale outputs");
    require(G.rank() == 5 && G.shape()[0] == 1 && G.shape()[1] == 1,
            "multiscale_cross_entropy: mask must be [1,1,D,H,W]");
    Tensor inv_mask = detail::one_minus(G);
    Tensor total;
    for (const Tensor& tap : taps) {
        require(tap.rank() == 5 && tap.shape()[1] == 1, "multiscale_cross_entropy: taps must be [1,1,d,h,w]");
        Tensor p = tap;
        if (tap.shape() != G.shape()) p = resize_trilinear(tap, G.shape()[2], G.shape()[3], G.shape()[4]);
        require(p.shape() == G.shape(), "multiscale_cross_entropy: tap resolution mismatch after resize");
        p = clamp(p, epsilon, 1.0 - epsilon);
        Tensor ll = add(mul(G, log_t(p)), mul(inv_mask, log_t(detail::one_minus(p))));
        Tensor ce = mul_scalar(mean_all(ll), -1.0);
        total = total.defined() ? add(total, ce) : ce;
    }
    return total;
}

// Eq-style hybrid: Tversky on the fused probability map plus lambda times the
// multi-scale cross-entropy. The printed form subtracts a log-likelihood; it
// is implemented as an added negative log-likelihood so the total is a
// bounded-below loss.
inline Tensor hybrid_loss(const std::vector<Tensor>& taps, const Tensor& fused_P, const Tensor& G,
                          const LossConfig& cfg) {
    cfg.validate();
    Tensor loss = tversky_term(fused_P, G, cfg.tversky_alpha, cfg.tversky_beta, cfg.epsilon);
    if (cfg.ce_weight > 0.0)
        loss = add(loss, mul_scalar(multiscale_cross_entropy(taps, G, cfg.epsilon), cfg.ce_weight));
    return loss;
}

}  // namespace voxelseg
