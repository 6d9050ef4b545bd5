#pragma once

// Forecast verification: categorical skill (CSI, HSS) at intensity
// thresholds and intensity-weighted errors (BMSE, BMAE), per lead step.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fdnet/loss.hpp"
#include "fdnet/tensor.hpp"

namespace fdnet {

struct ConfusionCounts {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::int64_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    bool operator==(const ConfusionCounts&) const = default;
};

/// Events are values >= threshold.
ConfusionCounts confusion(const Tensor& pred, const Tensor& target, double threshold);

struct SkillScores {
    double csi = 0.0;
    double hss = 0.0;
};

/// CSI = TP/(TP+FN+FP); HSS = (TP*TN - FN*FP) / ((TP+FN)(FN+TN) + (TP+FP)(FP+TN)).
/// A zero denominator yields 0.
SkillScores skill_scores(const ConfusionCounts& c);

struct BalancedErrors {
    double bmse = 0.0;
    double bmae = 0.0;
};

/// (1/N) sum w(target) * err over all pixels, N = number of frames (the
/// product of every axis but the trailing two).
BalancedErrors balanced_errors(const Tensor& pred, const Tensor& target, const WeightScheme& scheme);

/// Scores accumulated per (lead step, threshold). CSI/HSS come in two
/// flavours: the mean of per-frame scores (headline) and scores of the
/// pooled counts.
class SkillReport {
public:
    SkillReport() = default;
    SkillReport(int steps, std::vector<double> thresholds, int cadence_minutes = 6);

    int steps() const { return steps_; }
    const std::vector<double>& thresholds() const { return thresholds_; }
    int cadence_minutes() const { return cadence_; }
    /// Lead time of 1-based `step`.
    int minutes(int step) const { return step * cadence_; }

    /// Adds one frame at 1-based lead `step`. Both spans cover one H*W frame.
    void add_frame(int step, const double* pred, const double* target, std::int64_t pixels,
                   const WeightScheme& scheme);
    /// Sums another report with identical layout into this one.
    void merge(const SkillReport& other);

    std::int64_t frames(int step) const;
    const ConfusionCounts& counts(int step, std::size_t threshold_index) const;
    double csi(int step, std::size_t threshold_index) const;
    double hss(int step, std::size_t threshold_index) const;
    SkillScores pooled(int step, std::size_t threshold_index) const;
    double bmse(int step) const;
    double bmae(int step) const;

    /// Aggregates over all steps.
    ConfusionCounts total_counts(std::size_t threshold_index) const;
    double avg_csi(std::size_t threshold_index) const;
    double avg_hss(std::size_t threshold_index) const;
    double avg_bmse() const;
    double avg_bmae() const;

    /// lead_step, minutes, threshold, tp, fp, tn, fn, csi, hss, bmse, bmae
    void write_csv(std::ostream& os) const;
    /// lead_step, minutes, then csi_<t>, hss_<t> per threshold.
    void write_framewise_csv(std::ostream& os) const;
    /// Table with AVG and 30/60/90/120-minute columns. Leads past the
    /// horizon print as "-".
    void write_summary(std::ostream& os) const;

private:
    struct Cell {
        ConfusionCounts counts;
        double csi_sum = 0.0;
        double hss_sum = 0.0;
    };
    struct Step {
        std::vector<Cell> cells;
        std::int64_t frames = 0;
        double se_sum = 0.0;
        double ae_sum = 0.0;
    };
    const Step& step_at(int step) const;

    int steps_ = 0;
    int cadence_ = 6;
    std::vector<double> thresholds_;
    std::vector<Step> per_step_;
};

/// preds and targets are [K, ...] with trailing H, W axes; slice k is lead
/// step k+1. Values must share the thresholds' and scheme's domain.
SkillReport evaluate_rollout(const Tensor& preds, const Tensor& targets, const std::vector<double>& thresholds,
                             const WeightScheme& scheme, int cadence_minutes = 6);

}  // namespace fdnet
