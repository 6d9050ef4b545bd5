#include "fdnet/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "fdnet/errors.hpp"

namespace fdnet {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

std::int64_t frame_pixels(const Tensor& t, const char* what) {
    if (t.rank() < 2) throw ShapeError(std::string(what) + ": need two trailing spatial axes");
    return t.dim(-2) * t.dim(-1);
}

ConfusionCounts count(const double* pred, const double* target, std::int64_t n, double threshold) {
    ConfusionCounts c;
    for (std::int64_t i = 0; i < n; ++i) {
        const bool p = pred[i] >= threshold, t = target[i] >= threshold;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

ConfusionCounts confusion(const Tensor& pred, const Tensor& target, double threshold) {
    require_same_shape(pred, target, "confusion");
    return count(pred.data().data(), target.data().data(), pred.numel(), threshold);
}

SkillScores skill_scores(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
    SkillScores s;
    s.csi = ratio(tp, tp + fn + fp);
    s.hss = ratio(tp * tn - fn * fp, (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn));
    return s;
}

BalancedErrors balanced_errors(const Tensor& pred, const Tensor& target, const WeightScheme& scheme) {
    require_same_shape(pred, target, "balanced_errors");
    const auto frames = target.numel() / frame_pixels(target, "balanced_errors");
    const auto p = pred.data(), t = target.data();
    double se = 0.0, ae = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double w = pixel_weight(t[i], scheme), d = p[i] - t[i];
        se += w * d * d;
        ae += w * std::abs(d);
    }
    const double n = static_cast<double>(frames);
    return {se / n, ae / n};
}

SkillReport::SkillReport(int steps, std::vector<double> thresholds, int cadence_minutes)
    : steps_(steps), cadence_(cadence_minutes), thresholds_(std::move(thresholds)) {
    if (steps < 1) throw ShapeError("SkillReport: need at least one lead step");
    if (cadence_minutes < 1) throw ConfigError("cadence_minutes: must be positive");
    per_step_.resize(static_cast<std::size_t>(steps));
    for (auto& s : per_step_) s.cells.resize(thresholds_.size());
}

const SkillReport::Step& SkillReport::step_at(int step) const {
    if (step < 1 || step > steps_)
        throw std::out_of_range("SkillReport: lead step " + std::to_string(step) + " outside 1.." +
                                std::to_string(steps_));
    return per_step_[static_cast<std::size_t>(step - 1)];
}

void SkillReport::add_frame(int step, const double* pred, const double* target, std::int64_t pixels,
                            const WeightScheme& scheme) {
    step_at(step);
    auto& s = per_step_[static_cast<std::size_t>(step - 1)];
    for (std::size_t k = 0; k < thresholds_.size(); ++k) {
        const auto c = count(pred, target, pixels, thresholds_[k]);
        const auto sc = skill_scores(c);
        auto& cell = s.cells[k];
        cell.counts += c;
        cell.csi_sum += sc.csi;
        cell.hss_sum += sc.hss;
    }
    for (std::int64_t i = 0; i < pixels; ++i) {
        const double w = pixel_weight(target[i], scheme), d = pred[i] - target[i];
        s.se_sum += w * d * d;
        s.ae_sum += w * std::abs(d);
    }
    ++s.frames;
}

void SkillReport::merge(const SkillReport& other) {
    if (other.steps_ != steps_ || other.thresholds_ != thresholds_ || other.cadence_ != cadence_)
        throw ShapeError("SkillReport::merge: layouts differ");
    for (std::size_t i = 0; i < per_step_.size(); ++i) {
        auto& a = per_step_[i];
        const auto& b = other.per_step_[i];
        for (std::size_t k = 0; k < a.cells.size(); ++k) {
            a.cells[k].counts += b.cells[k].counts;
            a.cells[k].csi_sum += b.cells[k].csi_sum;
            a.cells[k].hss_sum += b.cells[k].hss_sum;
        }
        a.frames += b.frames;
        a.se_sum += b.se_sum;
        a.ae_sum += b.ae_sum;
    }
}

std::int64_t SkillReport::frames(int step) const { return step_at(step).frames; }

const ConfusionCounts& SkillReport::counts(int step, std::size_t threshold_index) const {
    return step_at(step).cells.at(threshold_index).counts;
}

double SkillReport::csi(int step, std::size_t threshold_index) const {
    const auto& s = step_at(step);
    return ratio(s.cells.at(threshold_index).csi_sum, static_cast<double>(s.frames));
}

double SkillReport::hss(int step, std::size_t threshold_index) const {
    const auto& s = step_at(step);
    return ratio(s.cells.at(threshold_index).hss_sum, static_cast<double>(s.frames));
}

SkillScores SkillReport::pooled(int step, std::size_t threshold_index) const {
    return skill_scores(counts(step, threshold_index));
}

double SkillReport::bmse(int step) const {
    const auto& s = step_at(step);
    return ratio(s.se_sum, static_cast<double>(s.frames));
}

double SkillReport::bmae(int step) const {
    const auto& s = step_at(step);
    return ratio(s.ae_sum, static_cast<double>(s.frames));
}

ConfusionCounts SkillReport::total_counts(std::size_t threshold_index) const {
    ConfusionCounts c;
    for (const auto& s : per_step_) c += s.cells.at(threshold_index).counts;
    return c;
}

double SkillReport::avg_csi(std::size_t threshold_index) const {
    double sum = 0.0;
    std::int64_t n = 0;
    for (const auto& s : per_step_) {
        sum += s.cells.at(threshold_index).csi_sum;
        n += s.frames;
    }
    return ratio(sum, static_cast<double>(n));
}

double SkillReport::avg_hss(std::size_t threshold_index) const {
    double sum = 0.0;
    std::int64_t n = 0;
    for (const auto& s : per_step_) {
        sum += s.cells.at(threshold_index).hss_sum;
        n += s.frames;
    }
    return ratio(sum, static_cast<double>(n));
}

double SkillReport::avg_bmse() const {
    double sum = 0.0;
    for (int k = 1; k <= steps_; ++k) sum += bmse(k);
    return ratio(sum, static_cast<double>(steps_));
}

double SkillReport::avg_bmae() const {
    double sum = 0.0;
    for (int k = 1; k <= steps_; ++k) sum += bmae(k);
    return ratio(sum, static_cast<double>(steps_));
}

void SkillReport::write_csv(std::ostream& os) const {
    os << "lead_step,minutes,threshold,tp,fp,tn,fn,csi,hss,bmse,bmae\n";
    os << std::setprecision(17);
    for (int k = 1; k <= steps_; ++k)
        for (std::size_t t = 0; t < thresholds_.size(); ++t) {
            const auto& c = counts(k, t);
            os << k << ',' << minutes(k) << ',' << thresholds_[t] << ',' << c.tp << ',' << c.fp << ',' << c.tn
               << ',' << c.fn << ',' << csi(k, t) << ',' << hss(k, t) << ',' << bmse(k) << ',' << bmae(k) << '\n';
        }
}

void SkillReport::write_framewise_csv(std::ostream& os) const {
    os << "lead_step,minutes";
    for (double t : thresholds_) os << ",csi_" << t << ",hss_" << t;
    os << '\n' << std::setprecision(17);
    for (int k = 1; k <= steps_; ++k) {
        os << k << ',' << minutes(k);
        for (std::size_t t = 0; t < thresholds_.size(); ++t) os << ',' << csi(k, t) << ',' << hss(k, t);
        os << '\n';
    }
}

void SkillReport::write_summary(std::ostream& os) const {
    const int leads[] = {30, 60, 90, 120};
    auto cell = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(std::abs(v) < 1000 ? 4 : 1) << v;
        return s.str();
    };
    // Value at a lead time, or "-" when that lead is past the horizon or off
    // the cadence grid.
    auto at_lead = [&](int minutes_ahead, auto&& value) -> std::string {
        if (minutes_ahead % cadence_ != 0) return "-";
        const int step = minutes_ahead / cadence_;
        return step <= steps_ ? cell(value(step)) : "-";
    };
    os << std::left << std::setw(12) << "metric" << std::right << std::setw(14) << "AVG";
    for (int m : leads) os << std::setw(14) << (std::to_string(m) + "min");
    os << '\n';
    auto row = [&](const std::string& name, double avg, auto&& value) {
        os << std::left << std::setw(12) << name << std::right << std::setw(14) << cell(avg);
        for (int m : leads) os << std::setw(14) << at_lead(m, value);
        os << '\n';
    };
    for (std::size_t t = 0; t < thresholds_.size(); ++t) {
        std::ostringstream label;
        label << thresholds_[t];
        row("CSI>=" + label.str(), avg_csi(t), [&](int k) { return csi(k, t); });
        row("HSS>=" + label.str(), avg_hss(t), [&](int k) { return hss(k, t); });
    }
    row("BMSE", avg_bmse(), [&](int k) { return bmse(k); });
    row("BMAE", avg_bmae(), [&](int k) { return bmae(k); });
}

SkillReport evaluate_rollout(const Tensor& preds, const Tensor& targets, const std::vector<double>& thresholds,
                             const WeightScheme& scheme, int cadence_minutes) {
    require_same_shape(preds, targets, "evaluate_rollout");
    if (preds.rank() < 3) throw ShapeError("evaluate_rollout: need [K, ..., H, W]");
    const auto steps = preds.dim(0);
    const auto pixels = frame_pixels(preds, "evaluate_rollout");
    const auto per_step = preds.numel() / steps / pixels;
    SkillReport report(static_cast<int>(steps), thresholds, cadence_minutes);
    const double* p = preds.data().data();
    const double* t = targets.data().data();
    for (std::int64_t k = 0; k < steps; ++k)
        for (std::int64_t f = 0; f < per_step; ++f) {
            const auto off = (k * per_step + f) * pixels;
            report.add_frame(static_cast<int>(k + 1), p + off, t + off, pixels, scheme);
        }
    return report;
}

}  // namespace fdnet
