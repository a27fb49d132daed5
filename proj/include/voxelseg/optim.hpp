#pragma once

#include "voxelseg/network.hpp"

namespace voxelseg {

struct TrainConfig {
    double initial_lr = 1e-4;
    std::size_t halve_every = 100;
    std::size_t max_iterations = 300;
    std::size_t batch_size = 1;
    std::size_t val_every = 10;
    bool augment = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(initial_lr > 0.0)) throw ConfigError("train: initial_lr must be positive");
        if (halve_every < 1) throw ConfigError("train: halve_every must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (val_every < 1) throw ConfigError("train: val_every must be >= 1");
    }
};

// initial_lr * 0.5^floor(iteration / halve_every); exact halving via ldexp.
inline double lr_schedule(std::size_t iteration, const TrainConfig& cfg) {
    return std::ldexp(cfg.initial_lr, -static_cast<int>(iteration / cfg.halve_every));
}

// Bias-corrected Adam over the trainable registry entries.
struct AdamState {
    std::vector<Tensor> m, v;  // aligned with the parameter list
    std::uint64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState init(const std::vector<Tensor>& params) {
        AdamState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const Tensor& p : params) {
            s.m.push_back(Tensor::zeros(p.shape()));
            s.v.push_back(Tensor::zeros(p.shape()));
        }
        return s;
    }
};

inline void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr) {
    require(params.size() == state.m.size() && params.size() == state.v.size(),
            "adam_step: state does not match the parameter list");
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& p = params[i];
        require(state.m[i].shape() == p.shape(), "adam_step: moment shape does not match parameter");
        auto& g = p.grad();
        auto& m = state.m[i].data();
        auto& v = state.v[i].data();
        auto& w = p.data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (!std::isfinite(g[k]))
                throw ValueError("adam_step: non-finite gradient in parameter " + std::to_string(i) + " element " +
                                 std::to_string(k));
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            w[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace voxelseg
