#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "voxelseg/tensor.hpp"

namespace voxelseg {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

inline ConfusionCounts confusion(const Tensor& pred, const Tensor& truth) {
    require(pred.shape() == truth.shape(), "confusion: mask shapes differ");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred.data()[i], g = truth.data()[i];
        if ((p != 0.0 && p != 1.0) || (g != 0.0 && g != 1.0))
            throw ValueError("confusion: masks must be binary 0/1");
        if (p == 1.0 && g == 1.0)
            ++c.tp;
        else if (p == 1.0)
            ++c.fp;
        else if (g == 1.0)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

// [classes,D,H,W] logits -> {0,1} foreground mask (argmax, first index wins ties).
inline Tensor argmax_to_mask(const Tensor& logits) {
    require(logits.rank() == 4, "argmax_to_mask: logits must be [classes,D,H,W]");
    const std::size_t classes = logits.shape()[0];
    const std::size_t vox = logits.size() / classes;
    Tensor mask = Tensor::zeros({logits.shape()[1], logits.shape()[2], logits.shape()[3]});
    for (std::size_t i = 0; i < vox; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (logits.data()[c * vox + i] > logits.data()[best * vox + i]) best = c;
        mask.data()[i] = best >= 1 ? 1.0 : 0.0;
    }
    return mask;
}

struct VolumeMetrics {
    double dice = 0.0, accuracy = 0.0, precision = 0.0, specificity = 0.0, iou = 0.0, mcc = 0.0;
};

// All six formulas as printed; a 0/0 overlap ratio counts as perfect
// agreement (1) and an MCC with any zero denominator factor reports 0
// ("no better than chance").
inline VolumeMetrics compute_metrics(const ConfusionCounts& c) {
    require(c.total() > 0, "compute_metrics: empty confusion counts");
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
    VolumeMetrics m;
    m.dice = (2.0 * tp + fp + fn) > 0.0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 1.0;
    m.accuracy = (tp + tn) / (tp + tn + fp + fn);
    m.precision = (tp + fp) > 0.0 ? tp / (tp + fp) : 1.0;
    m.specificity = (tn + fp) > 0.0 ? tn / (tn + fp) : 1.0;
    m.iou = (tp + fp + fn) > 0.0 ? tp / (tp + fp + fn) : 1.0;
    const double f1 = tp + fp, f2 = tp + fn, f3 = tn + fp, f4 = tn + fn;
    m.mcc = (f1 > 0.0 && f2 > 0.0 && f3 > 0.0 && f4 > 0.0)
                ? (tp * tn - fp * fn) / std::sqrt(f1 * f2 * f3 * f4)
                : 0.0;
    return m;
}

struct MetricsReport {
    std::vector<std::pair<std::string, VolumeMetrics>> rows;

    VolumeMetrics aggregate() const {
        VolumeMetrics avg;
        if (rows.empty()) return avg;
        for (const auto& [name, m] : rows) {
            avg.dice += m.dice;
            avg.accuracy += m.accuracy;
            avg.precision += m.precision;
            avg.specificity += m.specificity;
            avg.iou += m.iou;
            avg.mcc += m.mcc;
        }
        const double n = static_cast<double>(rows.size());
        avg.dice /= n;
        avg.accuracy /= n;
        avg.precision /= n;
        avg.specificity /= n;
        avg.iou /= n;
        avg.mcc /= n;
        return avg;
    }

    // One row per volume plus an aggregate mean row.
    std::string to_csv() const {
        std::string out = "img,Dice,Accuracy,Precision,Specificity,IOU,MCC\n";
        char buf[256];
        auto emit = [&](const std::string& name, const VolumeMetrics& m) {
            std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", name.c_str(), m.dice,
                          m.accuracy, m.precision, m.specificity, m.iou, m.mcc);
            out += buf;
        };
        for (const auto& [name, m] : rows) emit(name, m);
        if (!rows.empty()) emit("AVE", aggregate());
        return out;
    }
};

}  // namespace voxelseg
