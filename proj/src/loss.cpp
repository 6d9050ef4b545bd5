#include "fdnet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "fdnet/errors.hpp"
#include "fdnet/ops.hpp"
#include "fdnet/units.hpp"

namespace fdnet {

WeightScheme WeightScheme::hko_rainrate() {
    return {SchemeKind::kHkoRainRate, ValueDomain::kRainRate, {2, 5, 10, 30}, {1, 2, 5, 10, 30}};
}

WeightScheme WeightScheme::srad_dbz() {
    return {SchemeKind::kSradDbz, ValueDomain::kDbz, {20, 30, 40, 50}, {1, 2, 5, 10, 30}};
}

WeightScheme WeightScheme::normalized() {
    return {SchemeKind::kNormalized, ValueDomain::kNormalized, {0.25, 0.375, 0.5, 0.625}, {1, 2, 5, 10, 30}};
}

WeightScheme WeightScheme::uniform() { return {SchemeKind::kUniform, ValueDomain::kNormalized, {}, {1}}; }

WeightScheme WeightScheme::custom(std::vector<double> thresholds, std::vector<double> weights, ValueDomain domain) {
    WeightScheme s{SchemeKind::kCustom, domain, std::move(thresholds), std::move(weights)};
    s.validate();
    return s;
}

void WeightScheme::validate() const {
    if (weights.size() != thresholds.size() + 1)
        throw ConfigError("weights: need exactly one more weight than thresholds");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) throw ConfigError("weights.weights: must be positive");
        if (i > 0 && weights[i] < weights[i - 1]) throw ConfigError("weights.weights: must be non-decreasing");
    }
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (!(thresholds[i] > thresholds[i - 1])) throw ConfigError("weights.thresholds: must be strictly increasing");
}

std::string to_string(SchemeKind kind) {
    switch (kind) {
        case SchemeKind::kHkoRainRate: return "hko_rainrate";
        case SchemeKind::kSradDbz: return "srad_dbz";
        case SchemeKind::kNormalized: return "normalized";
        case SchemeKind::kUniform: return "uniform";
        case SchemeKind::kCustom: return "custom";
    }
    return "?";
}

std::string to_string(ValueDomain domain) {
    switch (domain) {
        case ValueDomain::kNormalized: return "normalized";
        case ValueDomain::kDbz: return "dbz";
        case ValueDomain::kRainRate: return "rainrate";
    }
    return "?";
}

SchemeKind scheme_kind_from_string(const std::string& s) {
    for (auto k : {SchemeKind::kHkoRainRate, SchemeKind::kSradDbz, SchemeKind::kNormalized, SchemeKind::kUniform,
                   SchemeKind::kCustom})
        if (to_string(k) == s) return k;
    throw ConfigError("weights.kind: unknown scheme '" + s + "'");
}

ValueDomain value_domain_from_string(const std::string& s) {
    for (auto d : {ValueDomain::kNormalized, ValueDomain::kDbz, ValueDomain::kRainRate})
        if (to_string(d) == s) return d;
    throw ConfigError("unknown value domain '" + s + "'");
}

double pixel_weight(double value, const WeightScheme& scheme) {
    const auto it = std::upper_bound(scheme.thresholds.begin(), scheme.thresholds.end(), value);
    return scheme.weights[static_cast<std::size_t>(it - scheme.thresholds.begin())];
}

Tensor weight_map(const Tensor& target, const WeightScheme& scheme) {
    Tensor w(target.shape());
    auto out = w.data();
    const auto in = target.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pixel_weight(in[i], scheme);
    return w;
}

double from_normalized(double v, ValueDomain domain) {
    switch (domain) {
        case ValueDomain::kNormalized: return v;
        case ValueDomain::kDbz: return normalized_to_dbz(v);
        case ValueDomain::kRainRate: return dbz_to_rainrate(normalized_to_dbz(v));
    }
    return v;
}

Tensor weight_map_normalized(const Tensor& target, const WeightScheme& scheme) {
    Tensor w(target.shape());
    auto out = w.data();
    const auto in = target.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pixel_weight(from_normalized(in[i], scheme.domain), scheme);
    return w;
}

void LossConfig::validate() const {
    if (!(lambda_pixel >= 0.0)) throw ConfigError("loss.lambda_pixel: must be >= 0");
    if (!(lambda_gdl >= 0.0)) throw ConfigError("loss.lambda_gdl: must be >= 0");
    if (gdl_exponent < 1) throw ConfigError("loss.gdl_exponent: must be >= 1");
}

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

Var weighted_pixel_loss(Var pred, const Tensor& target, const Tensor& weights) {
    if (!pred.valid()) throw std::logic_error("weighted_pixel_loss: unbound prediction");
    if (pred.shape() != target.shape() || weights.shape() != target.shape())
        throw ShapeError("weighted_pixel_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    const auto p = pred.value().data(), t = target.data(), w = weights.data();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        total += w[i] * (std::abs(d) + d * d);
    }
    Tensor out = Tensor::scalar(total);
    require_finite(out, "weighted_pixel_loss");
    return pred.tape->record(std::move(out), {pred}, [pred, target, weights](Tape& tape, const Tensor& g) {
        const double gv = g.item();
        const auto p = tape.value(pred).data(), t = target.data(), w = weights.data();
        auto dst = tape.grad_buffer(pred).data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            const double d = p[i] - t[i];
            dst[i] += gv * w[i] * (sign(d) + 2.0 * d);
        }
    });
}

Var weighted_pixel_loss(Var pred, const Tensor& target, const WeightScheme& scheme) {
    return weighted_pixel_loss(pred, target, weight_map(target, scheme));
}

Var gdl_loss(Var pred, const Tensor& target, int exponent) {
    if (!pred.valid()) throw std::logic_error("gdl_loss: unbound prediction");
    if (exponent < 1) throw ShapeError("gdl_loss: exponent must be >= 1");
    if (pred.shape() != target.shape() || target.rank() < 2)
        throw ShapeError("gdl_loss: need equal shapes with two spatial axes, got " + shape_str(pred.shape()) +
                         " vs " + shape_str(target.shape()));
    const auto h = target.dim(-2), w = target.dim(-1);
    const auto frames = target.numel() / (h * w);
    const double e = static_cast<double>(exponent);

    // Visits every adjacent pair (a, b) with b the later index along rows or
    // columns and hands the pair to `fn`.
    auto for_pairs = [h, w, frames](auto&& fn) {
        for (std::int64_t f = 0; f < frames; ++f) {
            const auto base = f * h * w;
            for (std::int64_t i = 0; i < h; ++i)
                for (std::int64_t j = 0; j < w; ++j) {
                    const auto idx = base + i * w + j;
                    if (i > 0) fn(idx - w, idx);
                    if (j > 0) fn(idx - 1, idx);
                }
        }
    };

    const auto p = pred.value().data(), t = target.data();
    double total = 0.0;
    for_pairs([&](std::int64_t a, std::int64_t b) {
        const double dp = std::abs(p[static_cast<std::size_t>(b)] - p[static_cast<std::size_t>(a)]);
        const double dt = std::abs(t[static_cast<std::size_t>(b)] - t[static_cast<std::size_t>(a)]);
        total += std::pow(std::abs(dp - dt), e);
    });
    Tensor out = Tensor::scalar(total);
    require_finite(out, "gdl_loss");
    return pred.tape->record(std::move(out), {pred}, [pred, target, e, for_pairs](Tape& tape, const Tensor& g) {
        const double gv = g.item();
        const auto p = tape.value(pred).data(), t = target.data();
        auto dst = tape.grad_buffer(pred).data();
        for_pairs([&](std::int64_t a, std::int64_t b) {
            const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
            const double sp = p[ib] - p[ia];
            const double r = std::abs(sp) - std::abs(t[ib] - t[ia]);
            const double outer = e == 1.0 ? sign(r) : e * std::pow(std::abs(r), e - 1.0) * sign(r);
            const double gval = gv * outer * sign(sp);
            dst[ib] += gval;
            dst[ia] -= gval;
        });
    });
}

LossTerms total_loss(Var pred, const Tensor& target, const Tensor& weights, const LossConfig& cfg, double batch_size) {
    cfg.validate();
    if (!(batch_size > 0.0)) throw ShapeError("total_loss: batch size must be positive");
    LossTerms terms;
    terms.pixel = scale(weighted_pixel_loss(pred, target, weights), 1.0 / batch_size);
    terms.gdl = scale(gdl_loss(pred, target, cfg.gdl_exponent), 1.0 / batch_size);
    terms.total = scale(terms.pixel, cfg.lambda_pixel);
    if (cfg.lambda_gdl != 0.0) terms.total = add(terms.total, scale(terms.gdl, cfg.lambda_gdl));
    return terms;
}

LossTerms total_loss(Var pred, const Tensor& target, const WeightScheme& scheme, const LossConfig& cfg,
                     double batch_size) {
    return total_loss(pred, target, weight_map(target, scheme), cfg, batch_size);
}

}  // namespace fdnet
