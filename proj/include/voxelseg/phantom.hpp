#pragma once

#include "voxelseg/pipeline.hpp"

namespace voxelseg {

// Synthetic CT-like volume: a smooth background field, one large organ
// ellipsoid (label 1) and small high-contrast lesion ellipsoids (label 2).
// Intensities are HU-like so the preprocessing window applies unchanged.
struct PhantomConfig {
    double background = -80.0;
    double organ = 80.0;
    double lesion = 200.0;
    double noise_sigma = 8.0;
    double lesion_radius_lo = 0.08;  // fraction of the volume extent
    double lesion_radius_hi = 0.12;
};

struct PhantomResult {
    LabeledSample sample;  // label values {0,1,2}, image [1,S,S,S]
    std::size_t lesions_placed = 0;
    std::size_t lesions_requested = 0;
};

inline PhantomResult generate_phantom(std::uint64_t seed, std::size_t size, std::size_t n_lesions,
                                      const PhantomConfig& cfg = {}) {
    require(size >= 16, "generate_phantom: size must be >= 16");
    Rng rng(seed);
    const double S = static_cast<double>(size);

    // low-frequency background field from a coarse noise grid
    Tensor coarse = Tensor::zeros({1, 1, 4, 4, 4});
    for (double& v : coarse.data()) v = cfg.background + rng.uniform(-15.0, 15.0);
    Tensor field = resize_trilinear(coarse, size, size, size);

    Tensor image = Tensor::zeros({size, size, size});
    Tensor label = Tensor::zeros({size, size, size});
    for (std::size_t i = 0; i < image.size(); ++i) image.data()[i] = field.data()[i];

    // organ ellipsoid, centered with jittered semi-axes, smooth boundary
    const double cx = S * 0.5 + rng.uniform(-1.0, 1.0);
    const double cy = S * 0.5 + rng.uniform(-1.0, 1.0);
    const double cz = S * 0.5 + rng.uniform(-1.0, 1.0);
    const double ax = S * rng.uniform(0.32, 0.38);
    const double ay = S * rng.uniform(0.32, 0.38);
    const double az = S * rng.uniform(0.32, 0.38);
    for (std::size_t z = 0; z < size; ++z)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const double dz = (static_cast<double>(z) - cz) / az;
                const double dy = (static_cast<double>(y) - cy) / ay;
                const double dx = (static_cast<double>(x) - cx) / ax;
                const double r = std::sqrt(dz * dz + dy * dy + dx * dx);
                if (r >= 1.1) continue;
                const double w = r <= 0.9 ? 1.0 : (1.1 - r) / 0.2;
                const std::size_t i = (z * size + y) * size + x;
                image.data()[i] += (cfg.organ - cfg.background) * w;
                if (r <= 1.0) label.data()[i] = 1.0;
            }

    // lesions inside the organ; skip placements that do not fit
    struct Lesion {
        double cx, cy, cz, r;
    };
    std::vector<Lesion> placed;
    std::size_t attempts = 0;
    while (placed.size() < n_lesions && attempts < 40 * (n_lesions + 1)) {
        ++attempts;
        const double r = S * rng.uniform(cfg.lesion_radius_lo, cfg.lesion_radius_hi);
        const double nx = rng.uniform(-0.55, 0.55);
        const double ny = rng.uniform(-0.55, 0.55);
        const double nz = rng.uniform(-0.55, 0.55);
        const double lx = cx + nx * ax, ly = cy + ny * ay, lz = cz + nz * az;
        // entire lesion inside the organ core
        const double organ_r = std::sqrt(nx * nx + ny * ny + nz * nz);
        const double margin = r / std::min({ax, ay, az});
        if (organ_r + margin > 0.85) continue;
        bool overlaps = false;
        for (const auto& o : placed) {
            const double d = std::sqrt((o.cx - lx) * (o.cx - lx) + (o.cy - ly) * (o.cy - ly) +
                                       (o.cz - lz) * (o.cz - lz));
            if (d < o.r + r + 1.0) {
                overlaps = true;
                break;
            }
        }
        if (overlaps) continue;
        placed.push_back({lx, ly, lz, r});
        const long long zlo = std::max<long long>(0, static_cast<long long>(lz - r) - 1);
        const long long zhi = std::min<long long>(size - 1, static_cast<long long>(lz + r) + 1);
        for (long long z = zlo; z <= zhi; ++z)
            for (long long y = std::max<long long>(0, static_cast<long long>(ly - r) - 1);
                 y <= std::min<long long>(size - 1, static_cast<long long>(ly + r) + 1); ++y)
                for (long long x = std::max<long long>(0, static_cast<long long>(lx - r) - 1);
                     x <= std::min<long long>(size - 1, static_cast<long long>(lx + r) + 1); ++x) {
                    const double dz = static_cast<double>(z) - lz;
                    const double dy = static_cast<double>(y) - ly;
                    const double dx = static_cast<double>(x) - lx;
                    if (dz * dz + dy * dy + dx * dx > r * r) continue;
                    const std::size_t i =
                        (static_cast<std::size_t>(z) * size + static_cast<std::size_t>(y)) * size +
                        static_cast<std::size_t>(x);
                    image.data()[i] = cfg.lesion;
                    label.data()[i] = 2.0;
                }
    }

    for (double& v : image.data()) v += cfg.noise_sigma * rng.normal();

    PhantomResult res;
    res.sample.image = reshape(image, {1, size, size, size});
    res.sample.label = label;
    res.sample.provenance = "phantom(seed=" + std::to_string(seed) + ",size=" + std::to_string(size) + ")";
    res.lesions_placed = placed.size();
    res.lesions_requested = n_lesions;
    return res;
}

}  // namespace voxelseg
