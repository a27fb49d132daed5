#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "voxelseg/phantom.hpp"
#include "voxelseg/pipeline.hpp"

using namespace voxelseg;

namespace {

std::array<double, 3> centroid(const Tensor& mask, double threshold) {
    const std::size_t D = mask.shape()[0], H = mask.shape()[1], W = mask.shape()[2];
    double sz = 0, sy = 0, sx = 0, n = 0;
    for (std::size_t z = 0; z < D; ++z)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                if (mask.data()[(z * H + y) * W + x] > threshold) {
                    sz += static_cast<double>(z);
                    sy += static_cast<double>(y);
                    sx += static_cast<double>(x);
                    n += 1.0;
                }
    if (n == 0) return {0, 0, 0};
    return {sz / n, sy / n, sx / n};
}

}  // namespace

TEST_CASE("preprocess rejects thin volumes") {
    Tensor img = Tensor::zeros({40, 8, 8});
    Tensor lab = Tensor::zeros({40, 8, 8});
    PreprocessConfig cfg;  // min_slices default 48
    PreprocessResult r = preprocess(img, lab, cfg);
    REQUIRE(!r.sample.has_value());
    REQUIRE(r.rejection.find("48") != std::string::npos);
}

TEST_CASE("constant volume maps to a constant normalized value") {
    Tensor img = Tensor::full({8, 8, 8}, 25.0);  // HU
    Tensor lab = Tensor::zeros({8, 8, 8});
    PreprocessConfig cfg;
    cfg.min_slices = 4;
    cfg.target_inplane = 0;
    PreprocessResult r = preprocess(img, lab, cfg);
    REQUIRE(r.sample.has_value());
    const double expect = (25.0 + 200.0) / 450.0;
    for (double v : r.sample->image.data()) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("labels binarize to the configured foreground class") {
    Tensor img = Tensor::full({8, 6, 6}, 50.0);
    Tensor lab = Tensor::zeros({8, 6, 6});
    lab.data()[0] = 1.0;  // organ
    lab.data()[1] = 2.0;  // lesion
    PreprocessConfig cfg;
    cfg.min_slices = 4;
    cfg.target_inplane = 0;
    PreprocessResult r = preprocess(img, lab, cfg);
    REQUIRE(r.sample->label.data()[0] == 0.0);
    REQUIRE(r.sample->label.data()[1] == 1.0);

    cfg.liver_mode = true;
    PreprocessResult liver = preprocess(img, lab, cfg);
    REQUIRE(liver.sample->label.data()[0] == 1.0);
    REQUIRE(liver.sample->label.data()[1] == 1.0);
}

TEST_CASE("nearest-neighbor label resize preserves the value set") {
    Rng rng(301);
    Tensor img = Tensor::zeros({8, 10, 10});
    Tensor lab = Tensor::zeros({8, 10, 10});
    for (double& v : lab.data()) v = static_cast<double>(rng.integer(3));
    for (double& v : img.data()) v = rng.uniform(-100.0, 200.0);
    PreprocessConfig cfg;
    cfg.min_slices = 4;
    cfg.target_inplane = 6;
    PreprocessResult r = preprocess(img, lab, cfg);
    REQUIRE(r.sample->label.shape() == Shape{8, 6, 6});
    for (double v : r.sample->label.data()) REQUIRE((v == 0.0 || v == 1.0));
}

TEST_CASE("preprocess rejects misaligned shapes") {
    REQUIRE_THROWS_AS(preprocess(Tensor::zeros({8, 8, 8}), Tensor::zeros({8, 8, 9}), PreprocessConfig{}),
                      ShapeError);
}

TEST_CASE("preprocess is idempotent on conforming input") {
    PhantomResult ph = generate_phantom(42, 16, 2);
    PreprocessConfig cfg;
    cfg.min_slices = 8;
    cfg.target_inplane = 16;
    cfg.foreground_class = 2;
    PreprocessResult first = preprocess(reshape(ph.sample.image, {16, 16, 16}), ph.sample.label, cfg);
    REQUIRE(first.sample.has_value());
    PreprocessResult second =
        preprocess(reshape(first.sample->image, {16, 16, 16}), first.sample->label, cfg);
    REQUIRE(second.sample.has_value());
    REQUIRE(std::memcmp(second.sample->image.data().data(), first.sample->image.data().data(),
                        first.sample->image.size() * sizeof(double)) == 0);
    REQUIRE(std::memcmp(second.sample->label.data().data(), first.sample->label.data().data(),
                        first.sample->label.size() * sizeof(double)) == 0);
}

TEST_CASE("double flip along the same axis is the identity") {
    PhantomResult ph = generate_phantom(7, 16, 2);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        LabeledSample twice = flip_axis(flip_axis(ph.sample, axis), axis);
        REQUIRE(std::memcmp(twice.image.data().data(), ph.sample.image.data().data(),
                            ph.sample.image.size() * sizeof(double)) == 0);
        REQUIRE(std::memcmp(twice.label.data().data(), ph.sample.label.data().data(),
                            ph.sample.label.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("four quarter turns are the identity") {
    PhantomResult ph = generate_phantom(8, 16, 2);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        LabeledSample s = ph.sample;
        for (int i = 0; i < 4; ++i) s = rotate90(s, axis, 1);
        REQUIRE(std::memcmp(s.image.data().data(), ph.sample.image.data().data(),
                            ph.sample.image.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("augmentation keeps image and label aligned") {
    // the image is the label plus noise, so thresholded-image and label
    // centroids must move identically under every draw
    const std::size_t e = 16;
    Rng gen(302);
    LabeledSample s;
    s.label = Tensor::zeros({e, e, e});
    for (std::size_t z = 4; z < 9; ++z)
        for (std::size_t y = 6; y < 11; ++y)
            for (std::size_t x = 2; x < 7; ++x) s.label.data()[(z * e + y) * e + x] = 1.0;
    s.image = Tensor::zeros({1, e, e, e});
    for (std::size_t i = 0; i < s.label.size(); ++i)
        s.image.data()[i] = 10.0 * s.label.data()[i] + gen.uniform(0.0, 0.2);

    Rng rng(303);
    for (int draw = 0; draw < 40; ++draw) {
        LabeledSample a = augment(s, rng);
        REQUIRE(a.image.shape() == s.image.shape());
        REQUIRE(a.label.shape() == s.label.shape());
        for (double v : a.label.data()) REQUIRE((v == 0.0 || v == 1.0));  // value set preserved
        Tensor img3 = reshape(a.image, {e, e, e});
        const auto ci = centroid(img3, 5.0);
        const auto cl = centroid(a.label, 0.5);
        for (int k = 0; k < 3; ++k) REQUIRE(std::abs(ci[k] - cl[k]) <= 1.0);
    }
}

TEST_CASE("crop keeps geometry and zero-fills the complement") {
    PhantomResult ph = generate_phantom(9, 16, 1);
    LabeledSample c = crop_zero_fill(ph.sample, {2, 2, 2}, {10, 12, 14});
    REQUIRE(c.image.shape() == ph.sample.image.shape());
    REQUIRE(c.image.data()[0] == 0.0);
    REQUIRE(c.label.data()[0] == 0.0);
    const std::size_t inside = ((5 * 16 + 5) * 16 + 5);
    REQUIRE(c.image.data()[inside] == ph.sample.image.data()[inside]);
}

TEST_CASE("phantoms are a pure function of the seed") {
    PhantomResult a = generate_phantom(1234, 32, 3);
    PhantomResult b = generate_phantom(1234, 32, 3);
    REQUIRE(std::memcmp(a.sample.image.data().data(), b.sample.image.data().data(),
                        a.sample.image.size() * sizeof(double)) == 0);
    REQUIRE(std::memcmp(a.sample.label.data().data(), b.sample.label.data().data(),
                        a.sample.label.size() * sizeof(double)) == 0);
    PhantomResult c = generate_phantom(1235, 32, 3);
    REQUIRE(std::memcmp(a.sample.image.data().data(), c.sample.image.data().data(),
                        a.sample.image.size() * sizeof(double)) != 0);
}

TEST_CASE("zero lesions give an organ-only label") {
    PhantomResult ph = generate_phantom(5, 16, 0);
    REQUIRE(ph.lesions_placed == 0);
    for (double v : ph.sample.label.data()) REQUIRE(v != 2.0);
}

TEST_CASE("lesion voxel fraction stays within the generator contract") {
    // Monte-Carlo over 100 seeds: lesion fraction within [0.5%, 5%]
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        PhantomResult ph = generate_phantom(seed, 32, 3);
        REQUIRE(ph.lesions_placed >= 1);
        std::size_t lesion_voxels = 0;
        for (double v : ph.sample.label.data()) {
            REQUIRE((v == 0.0 || v == 1.0 || v == 2.0));
            if (v == 2.0) ++lesion_voxels;
        }
        const double fraction = static_cast<double>(lesion_voxels) / static_cast<double>(ph.sample.label.size());
        REQUIRE(fraction >= 0.005);
        REQUIRE(fraction <= 0.05);
    }
}

TEST_CASE("phantom images are finite and lesions are bright") {
    PhantomResult ph = generate_phantom(77, 32, 3);
    for (double v : ph.sample.image.data()) REQUIRE(std::isfinite(v));
    double lesion_mean = 0.0, organ_mean = 0.0;
    std::size_t nl = 0, no = 0;
    for (std::size_t i = 0; i < ph.sample.label.size(); ++i) {
        if (ph.sample.label.data()[i] == 2.0) {
            lesion_mean += ph.sample.image.data()[i];
            ++nl;
        } else if (ph.sample.label.data()[i] == 1.0) {
            organ_mean += ph.sample.image.data()[i];
            ++no;
        }
    }
    REQUIRE(nl > 0);
    REQUIRE(no > 0);
    REQUIRE(lesion_mean / static_cast<double>(nl) > organ_mean / static_cast<double>(no) + 60.0);
}

TEST_CASE("largest-remainder split apportionment") {
    // 88:22:20 over 130 is exact
    auto counts = split_counts(130, {88, 22, 20});
    REQUIRE(counts == std::array<std::size_t, 3>{88, 22, 20});
    // 13 volumes: quotas 8.8/2.2/2.0, leftover goes to the largest remainder
    counts = split_counts(13, {88, 22, 20});
    REQUIRE(counts == std::array<std::size_t, 3>{9, 2, 2});
    counts = split_counts(16, {12, 2, 2});
    REQUIRE(counts == std::array<std::size_t, 3>{12, 2, 2});
    counts = split_counts(0, {88, 22, 20});
    REQUIRE(counts == std::array<std::size_t, 3>{0, 0, 0});
}

TEST_CASE("manifest round trip and validation") {
    const std::string path = (std::filesystem::temp_directory_path() / "voxelseg_manifest.csv").string();
    std::vector<ManifestEntry> entries = {{"img0.nii", "lab0.nii", "train"}, {"img1.nii", "lab1.nii", "test"}};
    write_manifest(path, entries);
    auto back = read_manifest(path);
    REQUIRE(back.size() == 2);
    REQUIRE(back[0].image == "img0.nii");
    REQUIRE(back[1].split == "test");

    {
        std::ofstream f(path);
        f << "image,label,split\nimg,lab,banana\n";
    }
    REQUIRE_THROWS_WITH(read_manifest(path), Catch::Matchers::ContainsSubstring("banana"));
    {
        std::ofstream f(path);
        f << "wrong,header\n";
    }
    REQUIRE_THROWS_AS(read_manifest(path), IoError);
}
