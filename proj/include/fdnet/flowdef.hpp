#pragma once

#include <cstdint>

#include "fdnet/ops.hpp"

namespace fdnet {

/// Per-pixel displacement in feature pixels, each [N,1,H,W]. `u` moves along
/// columns (x), `v` along rows (y).
struct FlowField {
    Var u;
    Var v;
};

struct CorrOptions {
    int max_displacement = 1;  // d
    int stride = 1;            // s: displacements are multiples of s with |k*s| <= d
    bool normalize = false;    // divide by channel count
};

/// Side length of the displacement grid: 2*floor(d/s)+1.
int corr_grid_size(int max_displacement, int stride);
/// Number of cost-volume channels: corr_grid_size(d, s)^2.
int corr_channels(int max_displacement, int stride);
/// Default maximum displacement for a feature width: round(W/3).
int default_max_displacement(std::int64_t feature_width);

/// Correlation cost volume [N, D, H, W]. Channel k = ky*G + kx maps to the
/// displacement (dy, dx) = ((ky - r)*s, (kx - r)*s), r = floor(d/s):
///   out[n,k,y,x] = sum_c prev[n,c,y,x] * curr[n,c,y+dy,x+dx]
/// with zero contribution when the displaced point is outside the map.
Var corr(Var prev, Var curr, const CorrOptions& opt);

/// Bilinear backward warp with zero padding:
///   out[n,c,i,j] = sum_{m,k} s[n,c,m,k] * max(0, 1-|i+V-m|) * max(0, 1-|j+U-k|)
/// Differentiable w.r.t. s, u and v (right derivative at integer offsets).
Var warp(Var source, const FlowField& flow);

/// Elementwise a - b.
Var diff(Var a, Var b);

}  // namespace fdnet
