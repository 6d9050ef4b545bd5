#pragma once

#include <string>
#include <vector>

#include "fdnet/tape.hpp"

namespace fdnet {

enum class ValueDomain { kNormalized, kDbz, kRainRate };

enum class SchemeKind { kHkoRainRate, kSradDbz, kNormalized, kUniform, kCustom };

/// Piecewise-constant intensity weights over half-open intervals:
/// weights[0] below thresholds[0], weights[i] on [thresholds[i-1], thresholds[i]),
/// weights.back() at or above thresholds.back().
struct WeightScheme {
    SchemeKind kind = SchemeKind::kNormalized;
    ValueDomain domain = ValueDomain::kNormalized;
    std::vector<double> thresholds;
    std::vector<double> weights;

    /// Rain rate r (mm/h): 1 | 2 @2 | 5 @5 | 10 @10 | 30 @30.
    static WeightScheme hko_rainrate();
    /// Reflectivity x (dBZ): 1 | 2 @20 | 5 @30 | 10 @40 | 30 @50.
    static WeightScheme srad_dbz();
    /// The dBZ scheme rescaled to [0,1] over an 80 dBZ span: thresholds 0.25, 0.375, 0.5, 0.625.
    static WeightScheme normalized();
    static WeightScheme uniform();
    static WeightScheme custom(std::vector<double> thresholds, std::vector<double> weights, ValueDomain domain);

    /// Weights positive and non-decreasing; thresholds strictly increasing.
    void validate() const;
};

std::string to_string(SchemeKind kind);
std::string to_string(ValueDomain domain);
SchemeKind scheme_kind_from_string(const std::string& s);
ValueDomain value_domain_from_string(const std::string& s);

/// Weight of a pixel whose intensity (in the scheme's domain) is `value`.
double pixel_weight(double value, const WeightScheme& scheme);

/// Per-pixel weights for a target already expressed in the scheme's domain.
Tensor weight_map(const Tensor& target, const WeightScheme& scheme);

/// Per-pixel weights for a normalized [0,1] target, converting each value
/// into the scheme's domain first.
Tensor weight_map_normalized(const Tensor& target, const WeightScheme& scheme);

/// Converts a normalized [0,1] value into `domain`.
double from_normalized(double v, ValueDomain domain);

struct LossConfig {
    double lambda_pixel = 1.0;
    double lambda_gdl = 1.0;
    int gdl_exponent = 1;

    void validate() const;
};

/// sum w * (|pred - target| + (pred - target)^2). The L1 subgradient at 0 is 0.
Var weighted_pixel_loss(Var pred, const Tensor& target, const Tensor& weights);
Var weighted_pixel_loss(Var pred, const Tensor& target, const WeightScheme& scheme);

/// Gradient difference loss over the two trailing (spatial) axes:
///   sum | |p[i,j]-p[i-1,j]| - |t[i,j]-t[i-1,j]| |^e + | |p[i,j]-p[i,j-1]| - |t[i,j]-t[i,j-1]| |^e
Var gdl_loss(Var pred, const Tensor& target, int exponent = 1);

struct LossTerms {
    Var pixel;
    Var gdl;
    Var total;
};

/// lambda_pixel * pixel + lambda_gdl * gdl, each divided by `batch_size`.
LossTerms total_loss(Var pred, const Tensor& target, const Tensor& weights, const LossConfig& cfg,
                     double batch_size = 1.0);
LossTerms total_loss(Var pred, const Tensor& target, const WeightScheme& scheme, const LossConfig& cfg,
                     double batch_size = 1.0);

}  // namespace fdnet
