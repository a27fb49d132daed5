#pragma once

#include <filesystem>
#include <fstream>
#include <optional>

#include "voxelseg/conv.hpp"
#include "voxelseg/tensor.hpp"

namespace voxelseg {

// A spatially aligned image/label pair. Labels are {0,1} once preprocessed;
// raw dataset labels may carry {0: background, 1: organ, 2: lesion}.
struct LabeledSample {
    Tensor image;  // [1,D,H,W]
    Tensor label;  // [D,H,W]
    std::string provenance;
};

struct PreprocessConfig {
    std::size_t min_slices = 48;
    std::size_t target_inplane = 256;  // 0 keeps the native in-plane size
    double hu_window_lo = -200.0;
    double hu_window_hi = 250.0;
    std::size_t foreground_class = 2;  // lesion label; liver_mode takes any label >= 1
    bool liver_mode = false;
};

namespace detail {

inline Tensor resize_nearest3d(const Tensor& v, std::size_t TD, std::size_t TH, std::size_t TW) {
    const std::size_t D = v.shape()[0], H = v.shape()[1], W = v.shape()[2];
    Tensor out = Tensor::zeros({TD, TH, TW});
    auto src_index = [](std::size_t o, std::size_t in, std::size_t outn) {
        const double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(outn);
        const long long i = static_cast<long long>(std::floor(s));
        return static_cast<std::size_t>(std::min<long long>(std::max<long long>(i, 0), static_cast<long long>(in) - 1));
    };
    for (std::size_t z = 0; z < TD; ++z)
        for (std::size_t y = 0; y < TH; ++y)
            for (std::size_t x = 0; x < TW; ++x)
                out.data()[(z * TH + y) * TW + x] =
                    v.data()[(src_index(z, D, TD) * H + src_index(y, H, TH)) * W + src_index(x, W, TW)];
    return out;
}

}  // namespace detail

struct PreprocessResult {
    std::optional<LabeledSample> sample;
    std::string rejection;  // set when sample is empty
};

// Rejection gate, in-plane resize (trilinear image / nearest label), label
// binarization, and affine intensity windowing onto [0,1]. Already-conforming
// inputs (normalized intensities, binary labels, target size) pass through
// unchanged, so the operation is idempotent.
inline PreprocessResult preprocess(const Tensor& raw_image, const Tensor& raw_label, const PreprocessConfig& cfg,
                                   std::string provenance = "") {
    require(raw_image.rank() == 3 && raw_label.rank() == 3, "preprocess: volumes must be [D,H,W]");
    require(raw_image.shape() == raw_label.shape(), "preprocess: image and label shapes are misaligned");
    const std::size_t D = raw_image.shape()[0];
    if (D < cfg.min_slices)
        return {std::nullopt, "volume has " + std::to_string(D) + " slices, below the minimum of " +
                                  std::to_string(cfg.min_slices)};

    Tensor img = raw_image;
    Tensor lab = raw_label;
    if (cfg.target_inplane > 0 &&
        (img.shape()[1] != cfg.target_inplane || img.shape()[2] != cfg.target_inplane)) {
        img = reshape(resize_trilinear(reshape(img, {1, 1, D, img.shape()[1], img.shape()[2]}), D, cfg.target_inplane,
                                       cfg.target_inplane),
                      {D, cfg.target_inplane, cfg.target_inplane});
        lab = detail::resize_nearest3d(lab, D, cfg.target_inplane, cfg.target_inplane);
    }

    // binary label sets are the post-state and pass through untouched
    bool binary = true;
    for (double v : lab.data())
        if (v != 0.0 && v != 1.0) {
            binary = false;
            break;
        }
    Tensor mask = Tensor::zeros(lab.shape());
    for (std::size_t i = 0; i < lab.size(); ++i) {
        const double v = lab.data()[i];
        const bool fg = binary ? v == 1.0
                               : (cfg.liver_mode ? v >= 1.0 : v == static_cast<double>(cfg.foreground_class));
        mask.data()[i] = fg ? 1.0 : 0.0;
    }

    double lo = img.data()[0], hi = img.data()[0];
    for (double v : img.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Tensor norm = Tensor::zeros(img.shape());
    if (lo >= -1e-9 && hi <= 1.0 + 1e-9) {
        norm.data() = img.data();  // already normalized
    } else {
        const double span = cfg.hu_window_hi - cfg.hu_window_lo;
        require(span > 0.0, "preprocess: empty intensity window");
        for (std::size_t i = 0; i < img.size(); ++i) {
            const double c = std::min(cfg.hu_window_hi, std::max(cfg.hu_window_lo, img.data()[i]));
            norm.data()[i] = (c - cfg.hu_window_lo) / span;
        }
    }

    LabeledSample s;
    s.image = reshape(norm, {1, norm.shape()[0], norm.shape()[1], norm.shape()[2]});
    s.label = mask;
    s.provenance = std::move(provenance);
    return {s, ""};
}

// ---------------------------------------------------------------------------
// augmentation: axis-aligned 90-degree rotations, flips, and zero-fill crops,
// applied identically to image and label; the output shape never changes.

inline LabeledSample flip_axis(const LabeledSample& s, std::size_t axis) {
    require(axis < 3, "flip_axis: spatial axis 0..2");
    const std::size_t D = s.label.shape()[0], H = s.label.shape()[1], W = s.label.shape()[2];
    LabeledSample out;
    out.image = Tensor::zeros(s.image.shape());
    out.label = Tensor::zeros(s.label.shape());
    out.provenance = s.provenance;
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const std::size_t sz = axis == 0 ? D - 1 - z : z;
                const std::size_t sy = axis == 1 ? H - 1 - y : y;
                const std::size_t sx = axis == 2 ? W - 1 - x : x;
                out.image.data()[(z * H + y) * W + x] = s.image.data()[(sz * H + sy) * W + sx];
                out.label.data()[(z * H + y) * W + x] = s.label.data()[(sz * H + sy) * W + sx];
            }
    return out;
}

// Quarter turns about a spatial axis; requires the orthogonal plane square.
inline LabeledSample rotate90(const LabeledSample& s, std::size_t axis, std::size_t quarter_turns) {
    require(axis < 3, "rotate90: spatial axis 0..2");
    const std::size_t q = quarter_turns % 4;
    if (q == 0) return s;
    const std::size_t D = s.label.shape()[0], H = s.label.shape()[1], W = s.label.shape()[2];
    const std::size_t a = axis == 0 ? H : D;
    const std::size_t b = axis == 2 ? H : W;
    require(a == b || q == 2, "rotate90: quarter turns need a square plane about the rotation axis");
    LabeledSample out;
    out.image = Tensor::zeros(s.image.shape());
    out.label = Tensor::zeros(s.label.shape());
    out.provenance = s.provenance;
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                // coordinates in the rotation plane
                std::size_t u = axis == 0 ? y : z;
                std::size_t v = axis == 2 ? y : x;
                const std::size_t n = a;
                for (std::size_t t = 0; t < q; ++t) {
                    const std::size_t nu = v;
                    const std::size_t nv = n - 1 - u;
                    u = nu;
                    v = nv;
                }
                const std::size_t sz = axis == 0 ? z : u;
                const std::size_t sy = axis == 0 ? u : (axis == 2 ? v : y);
                const std::size_t sx = axis == 2 ? x : v;
                out.image.data()[(z * H + y) * W + x] = s.image.data()[(sz * H + sy) * W + sx];
                out.label.data()[(z * H + y) * W + x] = s.label.data()[(sz * H + sy) * W + sx];
            }
    return out;
}

// Keeps a random box, zero-fills the rest (a crop padded back in place).
inline LabeledSample crop_zero_fill(const LabeledSample& s, const std::array<std::size_t, 3>& lo,
                                    const std::array<std::size_t, 3>& hi) {
    const std::size_t D = s.label.shape()[0], H = s.label.shape()[1], W = s.label.shape()[2];
    require(lo[0] < hi[0] && hi[0] <= D && lo[1] < hi[1] && hi[1] <= H && lo[2] < hi[2] && hi[2] <= W,
            "crop_zero_fill: box out of range");
    LabeledSample out;
    out.image = Tensor::zeros(s.image.shape());
    out.label = Tensor::zeros(s.label.shape());
    out.provenance = s.provenance;
    for (std::size_t z = lo[0]; z < hi[0]; ++z)
        for (std::size_t y = lo[1]; y < hi[1]; ++y)
            for (std::size_t x = lo[2]; x < hi[2]; ++x) {
                const std::size_t i = (z * H + y) * W + x;
                out.image.data()[i] = s.image.data()[i];
                out.label.data()[i] = s.label.data()[i];
            }
    return out;
}

inline LabeledSample augment(const LabeledSample& s, Rng& rng) {
    LabeledSample out = s;
    const std::size_t D = s.label.shape()[0], H = s.label.shape()[1], W = s.label.shape()[2];

    const std::size_t rot_axis = rng.integer(3);
    std::size_t q = rng.integer(4);
    const bool square = (rot_axis == 0 && H == W) || (rot_axis == 1 && D == W) || (rot_axis == 2 && D == H);
    if (!square && q % 2 == 1) q = 2;
    if (q) out = rotate90(out, rot_axis, q);

    for (std::size_t axis = 0; axis < 3; ++axis)
        if (rng.coin()) out = flip_axis(out, axis);

    if (rng.coin()) {
        std::array<std::size_t, 3> ext{D, H, W}, lo{}, hi{};
        for (std::size_t a = 0; a < 3; ++a) {
            const std::size_t keep = std::max<std::size_t>(1, ext[a] - rng.integer(ext[a] / 4 + 1));
            lo[a] = rng.integer(ext[a] - keep + 1);
            hi[a] = lo[a] + keep;
        }
        out = crop_zero_fill(out, lo, hi);
    }
    return out;
}

// ---------------------------------------------------------------------------
// dataset manifest: image path, label path, split

struct ManifestEntry {
    std::string image, label, split;
};

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream f(path);
    if (!f) throw IoError("manifest: cannot write '" + path + "'");
    f << "image,label,split\n";
    for (const auto& e : entries) f << e.image << "," << e.label << "," << e.split << "\n";
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("manifest: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line) || line != "image,label,split")
        throw IoError("manifest: '" + path + "' is missing the image,label,split header");
    std::vector<ManifestEntry> out;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 == std::string::npos ? 0 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw IoError("manifest: malformed line " + std::to_string(line_no) + " in '" + path + "'");
        ManifestEntry e{line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1), line.substr(c2 + 1)};
        if (e.split != "train" && e.split != "val" && e.split != "test")
            throw IoError("manifest: line " + std::to_string(line_no) + ": unknown split '" + e.split + "'");
        out.push_back(std::move(e));
    }
    return out;
}

// Largest-remainder apportionment of `total` over the ratio weights.
inline std::array<std::size_t, 3> split_counts(std::size_t total, const std::array<std::size_t, 3>& ratio) {
    const double denom = static_cast<double>(ratio[0] + ratio[1] + ratio[2]);
    require(denom > 0, "split_counts: zero ratio");
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double quota = static_cast<double>(total) * static_cast<double>(ratio[i]) / denom;
        counts[i] = static_cast<std::size_t>(std::floor(quota));
        remainder[i] = quota - std::floor(quota);
        assigned += counts[i];
    }
    while (assigned < total) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < 3; ++i)
            if (remainder[i] > remainder[best]) best = i;
        ++counts[best];
        remainder[best] = -1.0;
        ++assigned;
    }
    return counts;
}

inline std::string resolve_against(const std::string& base_file, const std::string& path) {
    namespace fs = std::filesystem;
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(base_file).parent_path() / p).string();
}

}  // namespace voxelseg
