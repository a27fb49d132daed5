#pragma once

#include <filesystem>

#include "voxelseg/checkpoint.hpp"
#include "voxelseg/loss.hpp"
#include "voxelseg/metrics.hpp"
#include "voxelseg/pipeline.hpp"

namespace voxelseg {

struct HistoryRow {
    std::size_t iteration = 0;  // 0-based step index; lr_schedule(iteration) is the rate used
    double lr = 0.0;
    double loss = 0.0;
    bool validated = false;
    VolumeMetrics val;
};

struct TrainResult {
    std::vector<HistoryRow> history;
    double best_dice = -1.0;
    std::uint64_t best_iteration = 0;
    std::string checkpoint_path;  // empty when no validation improved
};

namespace detail {

// foreground-probability plane [1,1,d,h,w] from [1,classes,d,h,w] logits
inline Tensor foreground_prob(const Tensor& logits5) {
    const std::size_t classes = logits5.shape()[1];
    const std::size_t vox = logits5.size() / classes;
    Tensor p = softmax(reshape(logits5, {classes, vox}), 0);
    return reshape(slice_rows(p, 1, 1), {1, 1, logits5.shape()[2], logits5.shape()[3], logits5.shape()[4]});
}

}  // namespace detail

inline Tensor training_loss(ModelGraph& model, const LabeledSample& s, const LossConfig& lcfg, bool training) {
    std::vector<Tensor> taps;
    Tensor logits = model.forward(reshape(s.image, {model.cfg.input_channels, s.label.shape()[0],
                                                    s.label.shape()[1], s.label.shape()[2]}),
                                  training, &taps);
    std::vector<Tensor> tap_probs;
    tap_probs.reserve(taps.size());
    for (const Tensor& t : taps) tap_probs.push_back(detail::foreground_prob(t));
    Tensor fused_prob = detail::foreground_prob(
        reshape(logits, {1, model.cfg.classes, s.label.shape()[0], s.label.shape()[1], s.label.shape()[2]}));
    Tensor mask = reshape(s.label, {1, 1, s.label.shape()[0], s.label.shape()[1], s.label.shape()[2]});
    return hybrid_loss(tap_probs, fused_prob, mask, lcfg);
}

inline VolumeMetrics evaluate_sample(ModelGraph& model, const LabeledSample& s) {
    Tensor logits = model.forward(reshape(s.image, {model.cfg.input_channels, s.label.shape()[0],
                                                    s.label.shape()[1], s.label.shape()[2]}),
                                  false);
    return compute_metrics(confusion(argmax_to_mask(logits), s.label));
}

inline VolumeMetrics evaluate_mean(ModelGraph& model, const std::vector<LabeledSample>& set) {
    MetricsReport report;
    for (const auto& s : set) report.rows.push_back({s.provenance, evaluate_sample(model, s)});
    return report.aggregate();
}

// Single-owner training loop: per-iteration loss history, periodic validation
// and best-Dice checkpointing. Everything is a deterministic function of
// (seed, config, data); a non-finite loss aborts and leaves the last-good
// checkpoint on disk.
inline TrainResult train_loop(ModelGraph& model, const std::vector<LabeledSample>& train_set,
                              const std::vector<LabeledSample>& val_set, const TrainConfig& tcfg,
                              const LossConfig& lcfg, const std::string& out_dir) {
    tcfg.validate();
    lcfg.validate();
    require(!train_set.empty(), "train_loop: empty training set");
    require(!val_set.empty(), "train_loop: empty validation set");
    std::filesystem::create_directories(out_dir);

    std::vector<Tensor> trainable;
    for (const auto& p : model.params)
        if (p.trainable) trainable.push_back(p.tensor);
    AdamState adam = AdamState::init(trainable);
    Rng rng(tcfg.seed);

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();  // forces a shuffle on first use

    TrainResult res;
    const std::string ckpt_path = (std::filesystem::path(out_dir) / "best.ckpt").string();
    for (std::size_t t = 0; t < tcfg.max_iterations; ++t) {
        const double lr = lr_schedule(t, tcfg);
        double loss_sum = 0.0;
        for (Tensor& p : trainable) p.zero_grad();
        for (std::size_t b = 0; b < tcfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.integer(i)]);
                cursor = 0;
            }
            const LabeledSample& raw = train_set[order[cursor++]];
            LabeledSample s = tcfg.augment ? augment(raw, rng) : raw;
            Tape tape;
            double loss_value;
            try {
                TapeScope scope(tape);
                Tensor loss = mul_scalar(training_loss(model, s, lcfg, true), 1.0 / static_cast<double>(tcfg.batch_size));
                loss_value = loss.item() * static_cast<double>(tcfg.batch_size);
                tape.backward(loss);
            } catch (const ValueError& e) {
                throw ValueError("train_loop: aborted at iteration " + std::to_string(t) + ": " + e.what() +
                                 " (last-good checkpoint retained)");
            }
            loss_sum += loss_value;
        }
        const double loss_mean = loss_sum / static_cast<double>(tcfg.batch_size);
        if (!std::isfinite(loss_mean))
            throw ValueError("train_loop: non-finite loss at iteration " + std::to_string(t) +
                             " (last-good checkpoint retained)");
        adam_step(trainable, adam, lr);

        HistoryRow row{t, lr, loss_mean, false, {}};
        if ((t + 1) % tcfg.val_every == 0 || t + 1 == tcfg.max_iterations) {
            row.validated = true;
            row.val = evaluate_mean(model, val_set);
            if (row.val.dice > res.best_dice) {
                res.best_dice = row.val.dice;
                res.best_iteration = t;
                Checkpoint c = make_checkpoint(model, &adam, t, res.best_dice, t, rng.save_state());
                save_checkpoint(ckpt_path, c);
                res.checkpoint_path = ckpt_path;
            }
        }
        res.history.push_back(row);
    }
    return res;
}

inline std::string history_to_csv(const std::vector<HistoryRow>& rows) {
    std::string out = "iteration,lr,loss,val_dice,val_accuracy,val_precision,val_specificity,val_iou,val_mcc\n";
    char buf[512];
    for (const auto& r : rows) {
        if (r.validated)
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration,
                          r.lr, r.loss, r.val.dice, r.val.accuracy, r.val.precision, r.val.specificity, r.val.iou,
                          r.val.mcc);
        else
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,,,,,,\n", r.iteration, r.lr, r.loss);
        out += buf;
    }
    return out;
}

}  // namespace voxelseg
