#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <utility>

#include "voxelseg/common.hpp"

namespace voxelseg {

// Dense 64-bit-float tensor, row-major. Copies alias the underlying node;
// values are treated as immutable once an op has produced them.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return Tensor(std::move(shape), requires_grad);
    }
    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        std::fill(t.data().begin(), t.data().end(), v);
        return t;
    }
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        require(values.size() == t.size(), "data length does not match shape " + shape_str(t.shape()));
        t.data() = std::move(values);
        return t;
    }
    static Tensor scalar(double v, bool requires_grad = false) {
        return full({1}, v, requires_grad);
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    std::size_t rank() const { return n_->shape.size(); }
    std::size_t size() const { return n_->value.size(); }

    // The handle is shallow-const: a const Tensor still exposes its node.
    std::vector<double>& data() const { return n_->value; }

    bool requires_grad() const { return n_->requires_grad; }
    const Tensor& set_requires_grad(bool b) const {
        n_->requires_grad = b;
        return *this;
    }

    // Gradient buffer, allocated zeroed on first touch.
    std::vector<double>& grad() const {
        if (n_->grad.size() != n_->value.size()) n_->grad.assign(n_->value.size(), 0.0);
        return n_->grad;
    }
    bool has_grad() const { return n_->grad.size() == n_->value.size(); }
    void zero_grad() const {
        if (has_grad()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
    }

    double item() const {
        require(size() == 1, "item() on non-scalar tensor " + shape_str(shape()));
        return n_->value[0];
    }

    bool same_node(const Tensor& o) const { return n_ == o.n_; }

private:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Node> n_;

    Tensor(Shape shape, bool requires_grad) : n_(std::make_shared<Node>()) {
        n_->shape = std::move(shape);
        n_->value.assign(numel(n_->shape), 0.0);
        n_->requires_grad = requires_grad;
    }
};

inline void check_finite(const Tensor& t, const char* op) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) throw ValueError(std::string(op) + ": non-finite value in output");
    }
}

// Reverse-mode tape: backward rules appended in forward order, replayed in
// reverse. Creation order gives topological order by construction.
class Tape {
public:
    void record(std::function<void()> rule) { rules_.push_back(std::move(rule)); }

    std::size_t size() const { return rules_.size(); }

    void backward(Tensor loss) {
        if (used_) throw ValueError("tape already consumed; reset() before reusing");
        if (loss.size() != 1) throw ValueError("backward requires a scalar loss");
        if (!loss.requires_grad()) throw ValueError("loss is detached from all parameters");
        used_ = true;
        loss.grad()[0] += 1.0;
        for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
    }

    void reset() {
        rules_.clear();
        used_ = false;
    }

private:
    std::vector<std::function<void()>> rules_;
    bool used_ = false;
};

namespace detail {
inline Tape*& tape_slot() {
    thread_local Tape* t = nullptr;
    return t;
}
}  // namespace detail

inline Tape* current_tape() { return detail::tape_slot(); }

// RAII activation of a tape for the enclosing thread.
class TapeScope {
public:
    explicit TapeScope(Tape& t) : prev_(detail::tape_slot()) { detail::tape_slot() = &t; }
    ~TapeScope() { detail::tape_slot() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

namespace detail {
inline void record_if_needed(const Tensor& out, std::function<void()> rule) {
    if (!out.requires_grad()) return;
    if (Tape* t = current_tape()) t->record(std::move(rule));
}
inline bool any_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->requires_grad()) return true;
    return false;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape(), detail::any_grad({&a, &b}));
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    check_finite(out, "add");
    detail::record_if_needed(out, [a, b, out]() mutable {
        const auto& g = out.grad();
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch");
    Tensor out = Tensor::zeros(a.shape(), detail::any_grad({&a, &b}));
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    check_finite(out, "sub");
    detail::record_if_needed(out, [a, b, out]() mutable {
        const auto& g = out.grad();
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch");
    Tensor out = Tensor::zeros(a.shape(), detail::any_grad({&a, &b}));
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    check_finite(out, "mul");
    detail::record_if_needed(out, [a, b, out]() mutable {
        const auto& g = out.grad();
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
        }
    });
    return out;
}

inline Tensor mul_scalar(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * c;
    check_finite(out, "mul_scalar");
    detail::record_if_needed(out, [a, out, c]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
    return out;
}

inline Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + c;
    check_finite(out, "add_scalar");
    detail::record_if_needed(out, [a, out]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return out;
}

// x * s where s is a learnable scalar (shape [1]) broadcast over x.
inline Tensor scale_by(const Tensor& x, const Tensor& s) {
    require(s.size() == 1, "scale_by: scale must be a scalar tensor");
    Tensor out = Tensor::zeros(x.shape(), detail::any_grad({&x, &s}));
    const double c = s.data()[0];
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * c;
    check_finite(out, "scale_by");
    detail::record_if_needed(out, [x, s, out, c]() mutable {
        const auto& g = out.grad();
        if (x.requires_grad()) {
            auto& gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * c;
        }
        if (s.requires_grad()) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.data()[i];
            s.grad()[0] += acc;
        }
    });
    return out;
}

// x[N,C,...] * a[N,1,...]: one attention coefficient per spatial location,
// shared across channels.
inline Tensor mul_channel_broadcast(const Tensor& x, const Tensor& a) {
    require(x.rank() == a.rank() && x.rank() >= 2, "mul_channel_broadcast: rank mismatch");
    require(a.shape()[1] == 1, "mul_channel_broadcast: broadcast operand needs a single channel");
    require(a.shape()[0] == x.shape()[0], "mul_channel_broadcast: batch mismatch");
    std::size_t spatial = 1;
    for (std::size_t i = 2; i < x.rank(); ++i) {
        require(x.shape()[i] == a.shape()[i], "mul_channel_broadcast: spatial mismatch");
        spatial *= x.shape()[i];
    }
    const std::size_t batch = x.shape()[0], ch = x.shape()[1];
    Tensor out = Tensor::zeros(x.shape(), detail::any_grad({&x, &a}));
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t s = 0; s < spatial; ++s)
                out.data()[(n * ch + c) * spatial + s] = x.data()[(n * ch + c) * spatial + s] * a.data()[n * spatial + s];
    check_finite(out, "mul_channel_broadcast");
    detail::record_if_needed(out, [x, a, out, batch, ch, spatial]() mutable {
        const auto& g = out.grad();
        if (x.requires_grad()) {
            auto& gx = x.grad();
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t c = 0; c < ch; ++c)
                    for (std::size_t s = 0; s < spatial; ++s)
                        gx[(n * ch + c) * spatial + s] += g[(n * ch + c) * spatial + s] * a.data()[n * spatial + s];
        }
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t s = 0; s < spatial; ++s) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < ch; ++c)
                        acc += g[(n * ch + c) * spatial + s] * x.data()[(n * ch + c) * spatial + s];
                    ga[n * spatial + s] += acc;
                }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// shape ops

inline Tensor reshape(const Tensor& a, Shape shape) {
    require(numel(shape) == a.size(), "reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    Tensor out = Tensor::zeros(std::move(shape), a.requires_grad());
    out.data() = a.data();
    detail::record_if_needed(out, [a, out]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return out;
}

inline Tensor transpose2d(const Tensor& a) {
    require(a.rank() == 2, "transpose2d: rank-2 tensor required");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    Tensor out = Tensor::zeros({n, m}, a.requires_grad());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data()[j * m + i] = a.data()[i * n + j];
    detail::record_if_needed(out, [a, out, m, n]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
    return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    require(!parts.empty(), "concat: no inputs");
    const Shape& s0 = parts[0].shape();
    require(axis < s0.size(), "concat: axis out of range");
    Shape out_shape = s0;
    bool needs = parts[0].requires_grad();
    for (std::size_t p = 1; p < parts.size(); ++p) {
        const Shape& s = parts[p].shape();
        require(s.size() == s0.size(), "concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != axis) require(s[i] == s0[i], "concat: non-axis extent mismatch");
        out_shape[axis] += s[axis];
        needs = needs || parts[p].requires_grad();
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
    for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

    Tensor out = Tensor::zeros(out_shape, needs);
    const std::size_t out_block = out_shape[axis] * inner;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t blk = p.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(out.data().data() + o * out_block + offset, p.data().data() + o * blk, blk * sizeof(double));
        offset += blk;
    }
    detail::record_if_needed(out, [parts, out, outer, out_block]() mutable {
        const auto& g = out.grad();
        std::size_t offset = 0;
        for (Tensor p : parts) {
            const std::size_t blk = p.size() / outer;  // axis extent * inner
            if (p.requires_grad()) {
                auto& gp = p.grad();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t k = 0; k < blk; ++k) gp[o * blk + k] += g[o * out_block + offset + k];
            }
            offset += blk;
        }
    });
    return out;
}

// Contiguous slice along axis 0.
inline Tensor slice_rows(const Tensor& a, std::size_t from, std::size_t count) {
    require(a.rank() >= 1, "slice_rows: empty shape");
    require(from + count <= a.shape()[0], "slice_rows: row range out of bounds");
    const std::size_t inner = a.size() / a.shape()[0];
    Shape out_shape = a.shape();
    out_shape[0] = count;
    Tensor out = Tensor::zeros(out_shape, a.requires_grad());
    std::memcpy(out.data().data(), a.data().data() + from * inner, count * inner * sizeof(double));
    detail::record_if_needed(out, [a, out, from, inner, count]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < count * inner; ++i) ga[from * inner + i] += g[i];
    });
    return out;
}

inline Tensor slice_cols(const Tensor& a, std::size_t from, std::size_t count) {
    require(a.rank() == 2, "slice_cols: rank-2 tensor required");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    require(from + count <= n, "slice_cols: column range out of bounds");
    Tensor out = Tensor::zeros({m, count}, a.requires_grad());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) out.data()[i * count + j] = a.data()[i * n + from + j];
    detail::record_if_needed(out, [a, out, from, count, m, n]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < count; ++j) ga[i * n + from + j] += g[i * count + j];
    });
    return out;
}

// Extends the last axis by repeating its final slice `extra` times.
inline Tensor replicate_pad_last(const Tensor& a, std::size_t extra) {
    require(a.rank() >= 1, "replicate_pad_last: empty shape");
    const std::size_t L = a.shape().back();
    require(L >= 1, "replicate_pad_last: empty last axis");
    if (extra == 0) return a;
    const std::size_t lead = a.size() / L;
    Shape out_shape = a.shape();
    out_shape.back() = L + extra;
    Tensor out = Tensor::zeros(out_shape, a.requires_grad());
    for (std::size_t l = 0; l < lead; ++l) {
        for (std::size_t i = 0; i < L; ++i) out.data()[l * (L + extra) + i] = a.data()[l * L + i];
        for (std::size_t e = 0; e < extra; ++e) out.data()[l * (L + extra) + L + e] = a.data()[l * L + L - 1];
    }
    detail::record_if_needed(out, [a, out, lead, L, extra]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t l = 0; l < lead; ++l) {
            for (std::size_t i = 0; i < L; ++i) ga[l * L + i] += g[l * (L + extra) + i];
            for (std::size_t e = 0; e < extra; ++e) ga[l * L + L - 1] += g[l * (L + extra) + L + e];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// matmul

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 tensors required");
    const std::size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    require(k == k2, "matmul: inner dimensions differ (" + std::to_string(k) + " vs " + std::to_string(k2) + ")");
    Tensor out = Tensor::zeros({m, n}, detail::any_grad({&a, &b}));
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    parallel_for(m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t t = 0; t < k; ++t) acc += pa[i * k + t] * pb[t * n + j];
                po[i * n + j] = acc;
            }
    });
    check_finite(out, "matmul");
    detail::record_if_needed(out, [a, b, out, m, n, k]() mutable {
        const auto& g = out.grad();
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t t = 0; t < k; ++t) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b.data()[t * n + j];
                    ga[i * k + t] += acc;
                }
        }
        if (b.requires_grad()) {
            auto& gb = b.grad();
            for (std::size_t t = 0; t < k; ++t)
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i) acc += a.data()[i * k + t] * g[i * n + j];
                    gb[t * n + j] += acc;
                }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// reductions

inline Tensor sum_all(const Tensor& a) {
    Tensor out = Tensor::zeros({1}, a.requires_grad());
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    out.data()[0] = acc;
    check_finite(out, "sum_all");
    detail::record_if_needed(out, [a, out]() mutable {
        const double g = out.grad()[0];
        auto& ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
    return out;
}

inline Tensor mean_all(const Tensor& a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.size())); }

// ---------------------------------------------------------------------------
// softmax

// Numerically stable softmax along `axis`; every slice sums to 1.
inline Tensor softmax(const Tensor& a, std::size_t axis) {
    require(axis < a.rank(), "softmax: axis out of range");
    const std::size_t len = a.shape()[axis];
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];

    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    const double* pa = a.data().data();
    double* po = out.data().data();
    parallel_for(outer * inner, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t s = lo; s < hi; ++s) {
            const std::size_t o = s / inner, in = s % inner;
            const std::size_t base = o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, pa[base + t * inner]);
            double z = 0.0;
            for (std::size_t t = 0; t < len; ++t) z += std::exp(pa[base + t * inner] - mx);
            for (std::size_t t = 0; t < len; ++t) po[base + t * inner] = std::exp(pa[base + t * inner] - mx) / z;
        }
    });
    check_finite(out, "softmax");
    detail::record_if_needed(out, [a, out, outer, inner, len]() mutable {
        const auto& g = out.grad();
        const auto& y = out.data();
        auto& ga = a.grad();
        for (std::size_t s = 0; s < outer * inner; ++s) {
            const std::size_t o = s / inner, in = s % inner;
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t t = 0; t < len; ++t) dot += g[base + t * inner] * y[base + t * inner];
            for (std::size_t t = 0; t < len; ++t)
                ga[base + t * inner] += y[base + t * inner] * (g[base + t * inner] - dot);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// activations

enum class Activation { Relu, Elu, Sigmoid };

inline Tensor activation(const Tensor& a, Activation kind) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.data()[i];
        switch (kind) {
            case Activation::Relu: out.data()[i] = x > 0.0 ? x : 0.0; break;
            case Activation::Elu: out.data()[i] = x > 0.0 ? x : std::expm1(x); break;
            case Activation::Sigmoid: out.data()[i] = 1.0 / (1.0 + std::exp(-x)); break;
        }
    }
    check_finite(out, "activation");
    detail::record_if_needed(out, [a, out, kind]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = a.data()[i];
            double d = 0.0;
            switch (kind) {
                // derivative at the ReLU kink (x == 0) is the positive-side slope
                case Activation::Relu: d = x >= 0.0 ? 1.0 : 0.0; break;
                case Activation::Elu: d = x > 0.0 ? 1.0 : std::exp(x); break;
                case Activation::Sigmoid: {
                    const double s = out.data()[i];
                    d = s * (1.0 - s);
                    break;
                }
            }
            ga[i] += g[i] * d;
        }
    });
    return out;
}

inline Tensor relu(const Tensor& a) { return activation(a, Activation::Relu); }
inline Tensor elu(const Tensor& a) { return activation(a, Activation::Elu); }
inline Tensor sigmoid(const Tensor& a) { return activation(a, Activation::Sigmoid); }

// PReLU with a single learnable slope tensor (shape [1]).
inline Tensor prelu(const Tensor& a, const Tensor& slope) {
    require(slope.size() == 1, "prelu: slope must be a scalar tensor");
    Tensor out = Tensor::zeros(a.shape(), detail::any_grad({&a, &slope}));
    const double al = slope.data()[0];
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        out.data()[i] = x > 0.0 ? x : al * x;
    }
    check_finite(out, "prelu");
    detail::record_if_needed(out, [a, slope, out, al]() mutable {
        const auto& g = out.grad();
        if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = a.data()[i];
                ga[i] += g[i] * (x >= 0.0 ? 1.0 : al);
            }
        }
        if (slope.requires_grad()) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = a.data()[i];
                if (x < 0.0) acc += g[i] * x;
            }
            slope.grad()[0] += acc;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// pointwise math for losses

inline Tensor log_t(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a.data()[i] > 0.0, "log: non-positive input");
        out.data()[i] = std::log(a.data()[i]);
    }
    check_finite(out, "log");
    detail::record_if_needed(out, [a, out]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a.data()[i];
    });
    return out;
}

inline Tensor reciprocal(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a.data()[i] != 0.0, "reciprocal: division by zero");
        out.data()[i] = 1.0 / a.data()[i];
    }
    check_finite(out, "reciprocal");
    detail::record_if_needed(out, [a, out]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * out.data()[i] * out.data()[i];
    });
    return out;
}

// Clamp with pass-through gradient strictly inside [lo,hi], zero outside.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = std::min(hi, std::max(lo, a.data()[i]));
    check_finite(out, "clamp");
    detail::record_if_needed(out, [a, out, lo, hi]() mutable {
        const auto& g = out.grad();
        auto& ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (a.data()[i] >= lo && a.data()[i] <= hi) ga[i] += g[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// initializers

inline Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor rand_normal(Shape shape, Rng& rng, double mean, double stddev, bool requires_grad = false) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = mean + stddev * rng.normal();
    return t;
}

}  // namespace voxelseg
