#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fdnet/tape.hpp"

namespace fdnet {

struct GradCheckOptions {
    double eps = 1e-4;
    /// Coordinates checked per input tensor; 0 checks all of them.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 0;
    /// When > 0, the four slopes of f over x-2h..x+2h are compared: their
    /// second differences are O(h^2) for smooth f but jump when a kink (|x| at
    /// 0, LeakyReLU at 0, bilinear weights at integer offsets) lies inside the
    /// stencil. A coordinate whose second difference exceeds this fraction of
    /// the slope magnitude is excluded. 0 disables exclusion.
    double kink_tolerance = 0.0;
    /// Lower bound on the relative-error denominator. Below it a coordinate is
    /// effectively held to an absolute bound, for gradients too small for
    /// central differences to resolve against rounding in f.
    double abs_floor = 1e-8;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0;
};

/// Scalar function of several tensors, expressed on a tape.
using MultiScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares reverse-mode gradients of `f` at `points` against central
/// differences. Per coordinate the error is
///   |analytic - numeric| / max(abs_floor, |analytic| + |numeric|)
/// and the maximum over checked coordinates is reported.
GradCheckResult grad_check(const MultiScalarFn& f, std::span<const Tensor> points, const GradCheckOptions& opt = {});

/// Single-input convenience form.
GradCheckResult grad_check(const std::function<Var(Var)>& f, const Tensor& point, const GradCheckOptions& opt = {});

}  // namespace fdnet
