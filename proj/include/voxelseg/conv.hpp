#pragma once

#include <array>

#include "voxelseg/tensor.hpp"

namespace voxelseg {

// Output extent for one axis: floor((i + pad_before + pad_after - k)/s) + 1.
inline std::size_t conv_out_extent(std::size_t i, std::size_t k, std::size_t s, std::size_t pb, std::size_t pa,
                                   const char* op) {
    const long long span = static_cast<long long>(i) + static_cast<long long>(pb) + static_cast<long long>(pa) -
                           static_cast<long long>(k);
    if (span < 0) throw ShapeError(std::string(op) + ": kernel exceeds padded input extent");
    return static_cast<std::size_t>(span / static_cast<long long>(s)) + 1;
}

namespace detail {

struct Conv3dDims {
    std::size_t N, C, D, H, W, F, KD, KH, KW, OD, OH, OW;
    std::size_t stride, pb, pa;  // common per-axis padding (before, after)
};

inline Conv3dDims conv3d_dims(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t pb,
                              std::size_t pa) {
    require(input.rank() == 5, "conv3d: input must be [N,C,D,H,W]");
    require(kernel.rank() == 5, "conv3d: kernel must be [F,C,kd,kh,kw]");
    require(stride >= 1, "conv3d: stride must be >= 1");
    Conv3dDims d{};
    d.N = input.shape()[0];
    d.C = input.shape()[1];
    d.D = input.shape()[2];
    d.H = input.shape()[3];
    d.W = input.shape()[4];
    d.F = kernel.shape()[0];
    require(kernel.shape()[1] == d.C, "conv3d: kernel channel count " + std::to_string(kernel.shape()[1]) +
                                          " does not match input channels " + std::to_string(d.C));
    d.KD = kernel.shape()[2];
    d.KH = kernel.shape()[3];
    d.KW = kernel.shape()[4];
    d.stride = stride;
    d.pb = pb;
    d.pa = pa;
    d.OD = conv_out_extent(d.D, d.KD, stride, pb, pa, "conv3d");
    d.OH = conv_out_extent(d.H, d.KH, stride, pb, pa, "conv3d");
    d.OW = conv_out_extent(d.W, d.KW, stride, pb, pa, "conv3d");
    return d;
}

}  // namespace detail

// 3D convolution with per-axis (before, after) zero padding shared by all
// spatial axes. Differentiable w.r.t. input, kernel and bias.
inline Tensor conv3d_pad(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                         std::size_t pad_before, std::size_t pad_after) {
    const auto d = detail::conv3d_dims(input, kernel, stride, pad_before, pad_after);
    require(bias.size() == d.F, "conv3d: bias length must equal filter count");

    Tensor out = Tensor::zeros({d.N, d.F, d.OD, d.OH, d.OW}, detail::any_grad({&input, &kernel, &bias}));
    const double* in = input.data().data();
    const double* ker = kernel.data().data();
    const double* b = bias.data().data();
    double* o = out.data().data();

    const std::size_t in_hw = d.H * d.W, in_dhw = d.D * in_hw;
    const std::size_t k_hw = d.KH * d.KW, k_chw = d.C * d.KD * k_hw;

    parallel_for(d.N * d.F * d.OD, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t idx = lo; idx < hi; ++idx) {
            const std::size_t od = idx % d.OD;
            const std::size_t f = (idx / d.OD) % d.F;
            const std::size_t n = idx / (d.OD * d.F);
            // valid kernel range so that the input coordinate stays in bounds
            const long long id0 = static_cast<long long>(od * d.stride) - static_cast<long long>(d.pb);
            const std::size_t kd_lo = id0 < 0 ? static_cast<std::size_t>(-id0) : 0;
            const std::size_t kd_hi = static_cast<std::size_t>(
                std::min<long long>(d.KD, std::max<long long>(0, static_cast<long long>(d.D) - id0)));
            for (std::size_t oh = 0; oh < d.OH; ++oh) {
                const long long ih0 = static_cast<long long>(oh * d.stride) - static_cast<long long>(d.pb);
                const std::size_t kh_lo = ih0 < 0 ? static_cast<std::size_t>(-ih0) : 0;
                const std::size_t kh_hi = static_cast<std::size_t>(
                    std::min<long long>(d.KH, std::max<long long>(0, static_cast<long long>(d.H) - ih0)));
                for (std::size_t ow = 0; ow < d.OW; ++ow) {
                    const long long iw0 = static_cast<long long>(ow * d.stride) - static_cast<long long>(d.pb);
                    const std::size_t kw_lo = iw0 < 0 ? static_cast<std::size_t>(-iw0) : 0;
                    const std::size_t kw_hi = static_cast<std::size_t>(
                        std::min<long long>(d.KW, std::max<long long>(0, static_cast<long long>(d.W) - iw0)));
                    double acc = b[f];
                    for (std::size_t c = 0; c < d.C; ++c) {
                        const double* in_c = in + (n * d.C + c) * in_dhw;
                        const double* ker_c = ker + f * k_chw + c * d.KD * k_hw;
                        for (std::size_t kd = kd_lo; kd < kd_hi; ++kd) {
                            const std::size_t id = static_cast<std::size_t>(id0 + static_cast<long long>(kd));
                            for (std::size_t kh = kh_lo; kh < kh_hi; ++kh) {
                                const std::size_t ih = static_cast<std::size_t>(ih0 + static_cast<long long>(kh));
                                const double* in_row = in_c + id * in_hw + ih * d.W + iw0;
                                const double* ker_row = ker_c + kd * k_hw + kh * d.KW;
                                for (std::size_t kw = kw_lo; kw < kw_hi; ++kw) acc += in_row[kw] * ker_row[kw];
                            }
                        }
                    }
                    o[((n * d.F + f) * d.OD + od) * d.OH * d.OW + oh * d.OW + ow] = acc;
                }
            }
        }
    });
    check_finite(out, "conv3d");

    detail::record_if_needed(out, [input, kernel, bias, out, d, in_hw, in_dhw, k_hw, k_chw]() mutable {
        const auto& g = out.grad();
        const bool gi = input.requires_grad(), gk = kernel.requires_grad(), gb = bias.requires_grad();
        double* din = gi ? input.grad().data() : nullptr;
        double* dker = gk ? kernel.grad().data() : nullptr;
        double* db = gb ? bias.grad().data() : nullptr;
        const double* in = input.data().data();
        const double* ker = kernel.data().data();
        std::size_t gidx = 0;
        for (std::size_t n = 0; n < d.N; ++n)
            for (std::size_t f = 0; f < d.F; ++f)
                for (std::size_t od = 0; od < d.OD; ++od)
                    for (std::size_t oh = 0; oh < d.OH; ++oh)
                        for (std::size_t ow = 0; ow < d.OW; ++ow, ++gidx) {
                            const double gv = g[gidx];
                            if (gv == 0.0) continue;
                            if (gb) db[f] += gv;
                            const long long id0 = static_cast<long long>(od * d.stride) - static_cast<long long>(d.pb);
                            const long long ih0 = static_cast<long long>(oh * d.stride) - static_cast<long long>(d.pb);
                            const long long iw0 = static_cast<long long>(ow * d.stride) - static_cast<long long>(d.pb);
                            for (std::size_t c = 0; c < d.C; ++c)
                                for (std::size_t kd = 0; kd < d.KD; ++kd) {
                                    const long long id = id0 + static_cast<long long>(kd);
                                    if (id < 0 || id >= static_cast<long long>(d.D)) continue;
                                    for (std::size_t kh = 0; kh < d.KH; ++kh) {
                                        const long long ih = ih0 + static_cast<long long>(kh);
                                        if (ih < 0 || ih >= static_cast<long long>(d.H)) continue;
                                        for (std::size_t kw = 0; kw < d.KW; ++kw) {
                                            const long long iw = iw0 + static_cast<long long>(kw);
                                            if (iw < 0 || iw >= static_cast<long long>(d.W)) continue;
                                            const std::size_t ii = (n * d.C + c) * in_dhw +
                                                                   static_cast<std::size_t>(id) * in_hw +
                                                                   static_cast<std::size_t>(ih) * d.W +
                                                                   static_cast<std::size_t>(iw);
                                            const std::size_t ki = f * k_chw + c * d.KD * k_hw + kd * k_hw +
                                                                   kh * d.KW + kw;
                                            if (din) din[ii] += gv * ker[ki];
                                            if (dker) dker[ki] += gv * in[ii];
                                        }
                                    }
                                }
                        }
    });
    return out;
}

inline Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride = 1,
                     std::size_t padding = 0) {
    return conv3d_pad(input, kernel, bias, stride, padding, padding);
}

// 1D convolution over [N,C,L] with same padding; kernel [F,C,K].
// Even K pads one short on the left (TF convention).
inline Tensor conv1d_same(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
    require(input.rank() == 3, "conv1d: input must be [N,C,L]");
    require(kernel.rank() == 3, "conv1d: kernel must be [F,C,K]");
    const std::size_t N = input.shape()[0], C = input.shape()[1], L = input.shape()[2];
    const std::size_t F = kernel.shape()[0], K = kernel.shape()[2];
    require(L >= 1, "conv1d: empty sequence");
    require(kernel.shape()[1] == C, "conv1d: kernel channel count does not match input channels");
    require(bias.size() == F, "conv1d: bias length must equal filter count");
    const std::size_t pb = (K - 1) / 2;

    Tensor out = Tensor::zeros({N, F, L}, detail::any_grad({&input, &kernel, &bias}));
    const double* in = input.data().data();
    const double* ker = kernel.data().data();
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t o = 0; o < L; ++o) {
                double acc = bias.data()[f];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t k = 0; k < K; ++k) {
                        const long long i = static_cast<long long>(o + k) - static_cast<long long>(pb);
                        if (i < 0 || i >= static_cast<long long>(L)) continue;
                        acc += in[(n * C + c) * L + static_cast<std::size_t>(i)] * ker[(f * C + c) * K + k];
                    }
                out.data()[(n * F + f) * L + o] = acc;
            }
    check_finite(out, "conv1d");

    detail::record_if_needed(out, [input, kernel, bias, out, N, C, L, F, K, pb]() mutable {
        const auto& g = out.grad();
        const bool gi = input.requires_grad(), gk = kernel.requires_grad(), gb = bias.requires_grad();
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t o = 0; o < L; ++o) {
                    const double gv = g[(n * F + f) * L + o];
                    if (gv == 0.0) continue;
                    if (gb) bias.grad()[f] += gv;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t k = 0; k < K; ++k) {
                            const long long i = static_cast<long long>(o + k) - static_cast<long long>(pb);
                            if (i < 0 || i >= static_cast<long long>(L)) continue;
                            const std::size_t ii = (n * C + c) * L + static_cast<std::size_t>(i);
                            const std::size_t ki = (f * C + c) * K + k;
                            if (gi) input.grad()[ii] += gv * kernel.data()[ki];
                            if (gk) kernel.grad()[ki] += gv * input.data()[ii];
                        }
                }
    });
    return out;
}

// ---------------------------------------------------------------------------
// max pooling over the trailing `spatial_axes` axes; every pooled extent must
// divide evenly. Gradient goes to each window's argmax, first index on ties.
inline Tensor maxpool(const Tensor& input, std::size_t window, std::size_t spatial_axes) {
    require(window >= 1, "maxpool: window must be >= 1");
    require(spatial_axes >= 1 && spatial_axes <= input.rank(), "maxpool: bad spatial axis count");
    require(spatial_axes <= 3, "maxpool: at most 3 pooled axes supported");
    const std::size_t lead_rank = input.rank() - spatial_axes;
    std::size_t lead = 1;
    for (std::size_t i = 0; i < lead_rank; ++i) lead *= input.shape()[i];

    std::array<std::size_t, 3> S{1, 1, 1}, O{1, 1, 1}, st{0, 0, 0};
    for (std::size_t i = 0; i < spatial_axes; ++i) {
        S[i] = input.shape()[lead_rank + i];
        require(S[i] % window == 0, "maxpool: extent " + std::to_string(S[i]) + " not divisible by window " +
                                        std::to_string(window));
        O[i] = S[i] / window;
    }
    st[spatial_axes - 1] = 1;
    for (std::size_t i = spatial_axes - 1; i-- > 0;) st[i] = st[i + 1] * S[i + 1];
    const std::size_t in_spatial = S[0] * S[1] * S[2];
    const std::size_t out_spatial = O[0] * O[1] * O[2];

    Shape out_shape(input.shape().begin(), input.shape().begin() + lead_rank);
    for (std::size_t i = 0; i < spatial_axes; ++i) out_shape.push_back(O[i]);

    Tensor out = Tensor::zeros(out_shape, input.requires_grad());
    auto argmax = std::make_shared<std::vector<std::size_t>>(lead * out_spatial);
    const double* in = input.data().data();
    double* o = out.data().data();

    for (std::size_t l = 0; l < lead; ++l) {
        const double* base = in + l * in_spatial;
        for (std::size_t oz = 0; oz < O[0]; ++oz)
            for (std::size_t oy = 0; oy < O[1]; ++oy)
                for (std::size_t ox = 0; ox < O[2]; ++ox) {
                    const std::size_t corner = oz * window * st[0] + oy * window * st[1] + ox * window * st[2];
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_off = corner;
                    const std::size_t wz = window;
                    const std::size_t wy = spatial_axes >= 2 ? window : 1;
                    const std::size_t wx = spatial_axes >= 3 ? window : 1;
                    for (std::size_t dz = 0; dz < wz; ++dz)
                        for (std::size_t dy = 0; dy < wy; ++dy)
                            for (std::size_t dx = 0; dx < wx; ++dx) {
                                const std::size_t off = corner + dz * st[0] + dy * st[1] + dx * st[2];
                                if (base[off] > best) {
                                    best = base[off];
                                    best_off = off;
                                }
                            }
                    const std::size_t oidx = l * out_spatial + (oz * O[1] + oy) * O[2] + ox;
                    o[oidx] = best;
                    (*argmax)[oidx] = l * in_spatial + best_off;
                }
    }
    check_finite(out, "maxpool");

    detail::record_if_needed(out, [input, out, argmax]() mutable {
        const auto& g = out.grad();
        auto& gi = input.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gi[(*argmax)[i]] += g[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// trilinear resize, align-corners=false grid. Border samples extrapolate
// linearly from the edge cell instead of clamping, so the interpolant is
// globally multilinear on single-cell inputs.
namespace detail {

struct LinearTap {
    std::size_t i0, i1;
    double w0, w1;
};

inline std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out) {
    std::vector<LinearTap> taps(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        if (in == 1) {
            taps[o] = {0, 0, 1.0, 0.0};
            continue;
        }
        const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        double seg = std::floor(src);
        seg = std::min(std::max(seg, 0.0), static_cast<double>(in - 2));
        const double t = src - seg;
        taps[o] = {static_cast<std::size_t>(seg), static_cast<std::size_t>(seg) + 1, 1.0 - t, t};
    }
    return taps;
}

}  // namespace detail

inline Tensor resize_trilinear(const Tensor& input, std::size_t TD, std::size_t TH, std::size_t TW) {
    require(input.rank() == 5, "resize_trilinear: input must be [N,C,D,H,W]");
    require(TD >= 1 && TH >= 1 && TW >= 1, "resize_trilinear: target extents must be positive");
    const std::size_t N = input.shape()[0], C = input.shape()[1];
    const std::size_t D = input.shape()[2], H = input.shape()[3], W = input.shape()[4];
    const auto tz = detail::linear_taps(D, TD);
    const auto ty = detail::linear_taps(H, TH);
    const auto tx = detail::linear_taps(W, TW);

    Tensor out = Tensor::zeros({N, C, TD, TH, TW}, input.requires_grad());
    const double* in = input.data().data();
    double* o = out.data().data();
    const std::size_t in_hw = H * W, in_dhw = D * in_hw;
    parallel_for(N * C * TD, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t idx = lo; idx < hi; ++idx) {
            const std::size_t od = idx % TD;
            const std::size_t nc = idx / TD;
            const double* base = in + nc * in_dhw;
            const auto& z = tz[od];
            for (std::size_t oh = 0; oh < TH; ++oh) {
                const auto& y = ty[oh];
                const double* r00 = base + z.i0 * in_hw + y.i0 * W;
                const double* r01 = base + z.i0 * in_hw + y.i1 * W;
                const double* r10 = base + z.i1 * in_hw + y.i0 * W;
                const double* r11 = base + z.i1 * in_hw + y.i1 * W;
                double* orow = o + (nc * TD + od) * TH * TW + oh * TW;
                for (std::size_t ow = 0; ow < TW; ++ow) {
                    const auto& x = tx[ow];
                    const double v00 = r00[x.i0] * x.w0 + r00[x.i1] * x.w1;
                    const double v01 = r01[x.i0] * x.w0 + r01[x.i1] * x.w1;
                    const double v10 = r10[x.i0] * x.w0 + r10[x.i1] * x.w1;
                    const double v11 = r11[x.i0] * x.w0 + r11[x.i1] * x.w1;
                    orow[ow] = (v00 * y.w0 + v01 * y.w1) * z.w0 + (v10 * y.w0 + v11 * y.w1) * z.w1;
                }
            }
        }
    });
    check_finite(out, "resize_trilinear");

    detail::record_if_needed(out, [input, out, tz, ty, tx, N, C, TD, TH, TW, in_hw, in_dhw, W]() mutable {
        const auto& g = out.grad();
        auto& gi = input.grad();
        std::size_t gidx = 0;
        for (std::size_t nc = 0; nc < N * C; ++nc)
            for (std::size_t od = 0; od < TD; ++od)
                for (std::size_t oh = 0; oh < TH; ++oh)
                    for (std::size_t ow = 0; ow < TW; ++ow, ++gidx) {
                        const double gv = g[gidx];
                        if (gv == 0.0) continue;
                        const auto& z = tz[od];
                        const auto& y = ty[oh];
                        const auto& x = tx[ow];
                        double* base = gi.data() + nc * in_dhw;
                        base[z.i0 * in_hw + y.i0 * W + x.i0] += gv * z.w0 * y.w0 * x.w0;
                        base[z.i0 * in_hw + y.i0 * W + x.i1] += gv * z.w0 * y.w0 * x.w1;
                        base[z.i0 * in_hw + y.i1 * W + x.i0] += gv * z.w0 * y.w1 * x.w0;
                        base[z.i0 * in_hw + y.i1 * W + x.i1] += gv * z.w0 * y.w1 * x.w1;
                        base[z.i1 * in_hw + y.i0 * W + x.i0] += gv * z.w1 * y.w0 * x.w0;
                        base[z.i1 * in_hw + y.i0 * W + x.i1] += gv * z.w1 * y.w0 * x.w1;
                        base[z.i1 * in_hw + y.i1 * W + x.i0] += gv * z.w1 * y.w1 * x.w0;
                        base[z.i1 * in_hw + y.i1 * W + x.i1] += gv * z.w1 * y.w1 * x.w1;
                    }
    });
    return out;
}

inline Tensor upsample_trilinear(const Tensor& input, std::size_t factor) {
    require(factor >= 1, "upsample_trilinear: factor must be >= 1");
    require(input.rank() == 5, "upsample_trilinear: input must be [N,C,D,H,W]");
    return resize_trilinear(input, input.shape()[2] * factor, input.shape()[3] * factor, input.shape()[4] * factor);
}

// ---------------------------------------------------------------------------
// batch normalization over channel axis 1

struct RunningStats {
    Tensor mean, var;
    static RunningStats identity(std::size_t channels) {
        return {Tensor::zeros({channels}), Tensor::full({channels}, 1.0)};
    }
};

inline Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats& stats, bool training,
                        double momentum = 0.1, double eps = 1e-5) {
    require(x.rank() >= 2, "batchnorm: input must have a channel axis");
    const std::size_t N = x.shape()[0], C = x.shape()[1];
    std::size_t spatial = 1;
    for (std::size_t i = 2; i < x.rank(); ++i) spatial *= x.shape()[i];
    require(gamma.size() == C && beta.size() == C, "batchnorm: gamma/beta length must equal channel count");
    require(stats.mean.size() == C && stats.var.size() == C, "batchnorm: running stats length must equal channels");
    require(N * spatial >= 1, "batchnorm: empty channel slice");

    const std::size_t M = N * spatial;
    std::vector<double> mu(C), var(C);
    if (training) {
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = x.data().data() + (n * C + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) s += p[i];
            }
            mu[c] = s / static_cast<double>(M);
            double sq = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* p = x.data().data() + (n * C + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    const double dlt = p[i] - mu[c];
                    sq += dlt * dlt;
                }
            }
            var[c] = sq / static_cast<double>(M);
            stats.mean.data()[c] = (1.0 - momentum) * stats.mean.data()[c] + momentum * mu[c];
            stats.var.data()[c] = (1.0 - momentum) * stats.var.data()[c] + momentum * var[c];
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mu[c] = stats.mean.data()[c];
            var[c] = stats.var.data()[c];
        }
    }

    Tensor out = Tensor::zeros(x.shape(), detail::any_grad({&x, &gamma, &beta}));
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(var[c] + eps);
            const double gz = gamma.data()[c], bt = beta.data()[c];
            const double* p = x.data().data() + (n * C + c) * spatial;
            double* q = out.data().data() + (n * C + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) q[i] = (p[i] - mu[c]) * inv * gz + bt;
        }
    check_finite(out, "batchnorm");

    auto mu_s = std::make_shared<std::vector<double>>(std::move(mu));
    auto var_s = std::make_shared<std::vector<double>>(std::move(var));
    detail::record_if_needed(out, [x, gamma, beta, out, mu_s, var_s, training, eps, N, C, spatial, M]() mutable {
        const auto& g = out.grad();
        const bool gx = x.requires_grad(), gg = gamma.requires_grad(), gb = beta.requires_grad();
        for (std::size_t c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt((*var_s)[c] + eps);
            const double gz = gamma.data()[c];
            double sum_g = 0.0, sum_gxhat = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const double* xp = x.data().data() + (n * C + c) * spatial;
                const double* gp = g.data() + (n * C + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    sum_g += gp[i];
                    sum_gxhat += gp[i] * (xp[i] - (*mu_s)[c]) * inv;
                }
            }
            if (gg) gamma.grad()[c] += sum_gxhat;
            if (gb) beta.grad()[c] += sum_g;
            if (!gx) continue;
            for (std::size_t n = 0; n < N; ++n) {
                const double* xp = x.data().data() + (n * C + c) * spatial;
                const double* gp = g.data() + (n * C + c) * spatial;
                double* dxp = x.grad().data() + (n * C + c) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    if (training) {
                        // full chain through the batch statistics
                        const double xhat = (xp[i] - (*mu_s)[c]) * inv;
                        dxp[i] += gz * inv *
                                  (gp[i] - sum_g / static_cast<double>(M) -
                                   xhat * sum_gxhat / static_cast<double>(M));
                    } else {
                        dxp[i] += gp[i] * gz * inv;
                    }
                }
            }
        }
    });
    return out;
}

}  // namespace voxelseg
