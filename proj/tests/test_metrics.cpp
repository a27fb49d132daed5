#include <catch2/catch_amalgamated.hpp>

#include "voxelseg/metrics.hpp"

using namespace voxelseg;

namespace {

Tensor random_mask(Shape shape, Rng& rng, double fg_prob = 0.5) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = rng.uniform() < fg_prob ? 1.0 : 0.0;
    return t;
}

// brute-force per-voxel tally + formula evaluation, independent of the
// library path
struct OracleMetrics {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double dice, accuracy, precision, specificity, iou, mcc;
};

OracleMetrics oracle(const Tensor& pred, const Tensor& truth) {
    OracleMetrics o;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.data()[i] == 1.0, g = truth.data()[i] == 1.0;
        if (p && g)
            ++o.tp;
        else if (p && !g)
            ++o.fp;
        else if (!p && g)
            ++o.fn;
        else
            ++o.tn;
    }
    const double tp = static_cast<double>(o.tp), fp = static_cast<double>(o.fp);
    const double fn = static_cast<double>(o.fn), tn = static_cast<double>(o.tn);
    o.dice = (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 1.0;
    o.accuracy = (tp + tn) / (tp + tn + fp + fn);
    o.precision = (tp + fp) > 0 ? tp / (tp + fp) : 1.0;
    o.specificity = (tn + fp) > 0 ? tn / (tn + fp) : 1.0;
    o.iou = (tp + fp + fn) > 0 ? tp / (tp + fp + fn) : 1.0;
    const double d1 = tp + fp, d2 = tp + fn, d3 = tn + fp, d4 = tn + fn;
    o.mcc = (d1 > 0 && d2 > 0 && d3 > 0 && d4 > 0) ? (tp * tn - fp * fn) / std::sqrt(d1 * d2 * d3 * d4) : 0.0;
    return o;
}

}  // namespace

TEST_CASE("confusion on equal all-ones masks") {
    Tensor ones = Tensor::full({8}, 1.0);
    ConfusionCounts c = confusion(ones, ones);
    REQUIRE(c.tp == 8);
    REQUIRE(c.fp == 0);
    REQUIRE(c.fn == 0);
    REQUIRE(c.tn == 0);
}

TEST_CASE("confusion of complementary masks has no correct voxels") {
    Rng rng(121);
    Tensor truth = random_mask({64}, rng);
    Tensor pred = Tensor::zeros({64});
    for (std::size_t i = 0; i < 64; ++i) pred.data()[i] = 1.0 - truth.data()[i];
    ConfusionCounts c = confusion(pred, truth);
    REQUIRE(c.tp == 0);
    REQUIRE(c.tn == 0);
    REQUIRE(c.fp + c.fn == 64);
}

TEST_CASE("confusion matches a per-voxel loop oracle exactly") {
    Rng rng(122);
    Tensor pred = random_mask({10, 10, 10}, rng);
    Tensor truth = random_mask({10, 10, 10}, rng);
    ConfusionCounts c = confusion(pred, truth);
    OracleMetrics o = oracle(pred, truth);
    REQUIRE(c.tp == o.tp);
    REQUIRE(c.fp == o.fp);
    REQUIRE(c.fn == o.fn);
    REQUIRE(c.tn == o.tn);
    REQUIRE(c.total() == 1000);
}

TEST_CASE("confusion rejects non-binary masks") {
    REQUIRE_THROWS_AS(confusion(Tensor::full({4}, 0.5), Tensor::zeros({4})), ValueError);
    REQUIRE_THROWS_AS(confusion(Tensor::zeros({4}), Tensor::zeros({5})), ShapeError);
}

TEST_CASE("counts merge by field-wise addition") {
    ConfusionCounts a{1, 2, 3, 4}, b{10, 20, 30, 40};
    a += b;
    REQUIRE(a.tp == 11);
    REQUIRE(a.fp == 22);
    REQUIRE(a.fn == 33);
    REQUIRE(a.tn == 44);
}

TEST_CASE("metrics on a degenerate all-positive volume") {
    VolumeMetrics m = compute_metrics({8, 0, 0, 0});
    REQUIRE(m.dice == 1.0);
    REQUIRE(m.precision == 1.0);
    REQUIRE(m.iou == 1.0);
    REQUIRE(m.mcc == 0.0);  // zero denominator factor => chance level by convention
}

TEST_CASE("metrics direct arithmetic example") {
    VolumeMetrics m = compute_metrics({2, 1, 1, 4});
    REQUIRE_THAT(m.dice, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    REQUIRE_THAT(m.accuracy, Catch::Matchers::WithinAbs(0.75, 1e-12));
    REQUIRE_THAT(m.precision, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    REQUIRE_THAT(m.specificity, Catch::Matchers::WithinAbs(0.8, 1e-12));
    REQUIRE_THAT(m.iou, Catch::Matchers::WithinAbs(0.5, 1e-12));
    REQUIRE_THAT(m.mcc, Catch::Matchers::WithinAbs(7.0 / 15.0, 1e-4));
}

TEST_CASE("reported dice/iou pairs satisfy the exact identity") {
    // per-volume identity IOU = Dice/(2-Dice) against published pairs
    const double pairs[3][2] = {{0.9356, 0.879}, {0.9411, 0.8887}, {0.9569, 0.9173}};
    for (const auto& p : pairs) REQUIRE_THAT(p[0] / (2.0 - p[0]), Catch::Matchers::WithinAbs(p[1], 5e-4));
}

TEST_CASE("the identity does not hold for averaged metrics") {
    // means of ratios: the documented Jensen-gap check
    const double avg_dice = 0.92171, avg_iou = 0.859115;
    REQUIRE(std::abs(avg_dice / (2.0 - avg_dice) - avg_iou) > 5e-4);
}

TEST_CASE("iou-dice identity and ordering hold for all counts") {
    Rng rng(123);
    for (int trial = 0; trial < 200; ++trial) {
        ConfusionCounts c{rng.integer(50), rng.integer(50), rng.integer(50), rng.integer(50)};
        if (c.total() == 0) c.tn = 1;
        VolumeMetrics m = compute_metrics(c);
        REQUIRE_THAT(m.iou, Catch::Matchers::WithinAbs(m.dice / (2.0 - m.dice), 1e-12));
        REQUIRE(m.iou >= 0.0);
        REQUIRE(m.iou <= m.dice + 1e-15);
        REQUIRE(m.dice <= 1.0);
        REQUIRE(m.mcc >= -1.0);
        REQUIRE(m.mcc <= 1.0);
    }
}

TEST_CASE("metrics equal the brute-force oracle on 100 random mask pairs") {
    Rng rng(124);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor pred = random_mask({10, 10, 10}, rng, rng.uniform());
        Tensor truth = random_mask({10, 10, 10}, rng, rng.uniform());
        ConfusionCounts c = confusion(pred, truth);
        VolumeMetrics m = compute_metrics(c);
        OracleMetrics o = oracle(pred, truth);
        REQUIRE(m.dice == o.dice);
        REQUIRE(m.accuracy == o.accuracy);
        REQUIRE(m.precision == o.precision);
        REQUIRE(m.specificity == o.specificity);
        REQUIRE(m.iou == o.iou);
        REQUIRE(m.mcc == o.mcc);
    }
}

TEST_CASE("report serializes with the published column layout") {
    MetricsReport report;
    report.rows.push_back({"27.nii", compute_metrics({2, 1, 1, 4})});
    report.rows.push_back({"28.nii", compute_metrics({8, 0, 0, 0})});
    const std::string csv = report.to_csv();
    REQUIRE(csv.rfind("img,Dice,Accuracy,Precision,Specificity,IOU,MCC\n", 0) == 0);
    REQUIRE(csv.find("27.nii,") != std::string::npos);
    REQUIRE(csv.find("AVE,") != std::string::npos);

    VolumeMetrics avg = report.aggregate();
    REQUIRE_THAT(avg.dice, Catch::Matchers::WithinAbs((2.0 / 3.0 + 1.0) / 2.0, 1e-12));
}
