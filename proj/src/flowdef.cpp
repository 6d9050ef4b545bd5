#include "fdnet/flowdef.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "fdnet/errors.hpp"

namespace fdnet {

int corr_grid_size(int max_displacement, int stride) {
    if (max_displacement < 0 || stride < 1) throw ShapeError("corr: need d >= 0 and s >= 1");
    return 2 * (max_displacement / stride) + 1;
}

int corr_channels(int max_displacement, int stride) {
    const int g = corr_grid_size(max_displacement, stride);
    return g * g;
}

int default_max_displacement(std::int64_t feature_width) {
    return static_cast<int>(std::lround(static_cast<double>(feature_width) / 3.0));
}

Var corr(Var prev, Var curr, const CorrOptions& opt) {
    if (!prev.valid() || !curr.valid() || prev.tape != curr.tape) throw std::logic_error("corr: bad inputs");
    const Tensor& a = prev.value();
    const Tensor& b = curr.value();
    if (a.rank() != 4 || a.shape() != b.shape())
        throw ShapeError("corr: feature maps must share an NCHW shape, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int grid = corr_grid_size(opt.max_displacement, opt.stride);
    const int radius = opt.max_displacement / opt.stride;
    const auto n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    const auto plane = h * w;
    const double factor = opt.normalize ? 1.0 / static_cast<double>(c) : 1.0;
    const std::int64_t d = static_cast<std::int64_t>(grid) * grid;

    Tensor out({n, d, h, w});
    auto o = out.data();
    const auto as = a.data(), bs = b.data();
    for (std::int64_t s = 0; s < n; ++s) {
        for (int ky = 0; ky < grid; ++ky) {
            const int dy = (ky - radius) * opt.stride;
            for (int kx = 0; kx < grid; ++kx) {
                const int dx = (kx - radius) * opt.stride;
                double* dst = o.data() + (s * d + ky * grid + kx) * plane;
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const double* pa = as.data() + (s * c + ch) * plane;
                    const double* pb = bs.data() + (s * c + ch) * plane;
                    for (std::int64_t y = 0; y < h; ++y) {
                        const std::int64_t yy = y + dy;
                        if (yy < 0 || yy >= h) continue;
                        for (std::int64_t x = 0; x < w; ++x) {
                            const std::int64_t xx = x + dx;
                            if (xx < 0 || xx >= w) continue;
                            dst[y * w + x] += pa[y * w + x] * pb[yy * w + xx];
                        }
                    }
                }
                if (factor != 1.0)
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] *= factor;
            }
        }
    }
    require_finite(out, "corr");
    return prev.tape->record(
        std::move(out), {prev, curr}, [prev, curr, grid, radius, stride = opt.stride, factor](Tape& t, const Tensor& g) {
            const Tensor& a = t.value(prev);
            const Tensor& b = t.value(curr);
            const auto n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
            const auto plane = h * w;
            const std::int64_t d = static_cast<std::int64_t>(grid) * grid;
            const bool need_a = t.requires_grad(prev), need_b = t.requires_grad(curr);
            double* da = need_a ? t.grad_buffer(prev).data().data() : nullptr;
            double* db = need_b ? t.grad_buffer(curr).data().data() : nullptr;
            const auto as = a.data(), bs = b.data(), gs = g.data();
            for (std::int64_t s = 0; s < n; ++s) {
                for (int ky = 0; ky < grid; ++ky) {
                    const int dy = (ky - radius) * stride;
                    for (int kx = 0; kx < grid; ++kx) {
                        const int dx = (kx - radius) * stride;
                        const double* gk = gs.data() + (s * d + ky * grid + kx) * plane;
                        for (std::int64_t ch = 0; ch < c; ++ch) {
                            const auto off = (s * c + ch) * plane;
                            for (std::int64_t y = 0; y < h; ++y) {
                                const std::int64_t yy = y + dy;
                                if (yy < 0 || yy >= h) continue;
                                for (std::int64_t x = 0; x < w; ++x) {
                                    const std::int64_t xx = x + dx;
                                    if (xx < 0 || xx >= w) continue;
                                    const double gv = gk[y * w + x] * factor;
                                    if (da) da[off + y * w + x] += gv * bs[off + yy * w + xx];
                                    if (db) db[off + yy * w + xx] += gv * as[off + y * w + x];
                                }
                            }
                        }
                    }
                }
            }
        });
}

namespace {

struct Tap {
    std::int64_t y0, x0;
    double fy, fx;
};

inline Tap tap_for(std::int64_t i, std::int64_t j, double v, double u) {
    const double y = static_cast<double>(i) + v;
    const double x = static_cast<double>(j) + u;
    const double y0 = std::floor(y), x0 = std::floor(x);
    return Tap{static_cast<std::int64_t>(y0), static_cast<std::int64_t>(x0), y - y0, x - x0};
}

}  // namespace

Var warp(Var source, const FlowField& flow) {
    if (!source.valid() || !flow.u.valid() || !flow.v.valid() || source.tape != flow.u.tape ||
        source.tape != flow.v.tape)
        throw std::logic_error("warp: bad inputs");
    const Tensor& sv = source.value();
    if (sv.rank() != 4) throw ShapeError("warp: source must be NCHW, got " + shape_str(sv.shape()));
    const Shape flow_shape{sv.dim(0), 1, sv.dim(2), sv.dim(3)};
    if (flow.u.shape() != flow_shape || flow.v.shape() != flow_shape)
        throw ShapeError("warp: flow fields must be " + shape_str(flow_shape) + ", got " + shape_str(flow.u.shape()) +
                         " and " + shape_str(flow.v.shape()));
    const auto n = sv.dim(0), c = sv.dim(1), h = sv.dim(2), w = sv.dim(3);
    const auto plane = h * w;
    Tensor out(sv.shape());
    auto o = out.data();
    const auto ss = sv.data(), us = flow.u.value().data(), vs = flow.v.value().data();
    auto sample = [&](const double* img, std::int64_t y, std::int64_t x) {
        return (y >= 0 && y < h && x >= 0 && x < w) ? img[y * w + x] : 0.0;
    };
    for (std::int64_t s = 0; s < n; ++s) {
        for (std::int64_t i = 0; i < h; ++i) {
            for (std::int64_t j = 0; j < w; ++j) {
                const auto fi = s * plane + i * w + j;
                const Tap tp = tap_for(i, j, vs[static_cast<std::size_t>(fi)], us[static_cast<std::size_t>(fi)]);
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const double* img = ss.data() + (s * c + ch) * plane;
                    o[static_cast<std::size_t>((s * c + ch) * plane + i * w + j)] =
                        (1 - tp.fy) * ((1 - tp.fx) * sample(img, tp.y0, tp.x0) + tp.fx * sample(img, tp.y0, tp.x0 + 1)) +
                        tp.fy * ((1 - tp.fx) * sample(img, tp.y0 + 1, tp.x0) + tp.fx * sample(img, tp.y0 + 1, tp.x0 + 1));
                }
            }
        }
    }
    require_finite(out, "warp");
    const Var u = flow.u, v = flow.v;
    return source.tape->record(std::move(out), {source, u, v}, [source, u, v](Tape& t, const Tensor& g) {
        const Tensor& sv = t.value(source);
        const auto n = sv.dim(0), c = sv.dim(1), h = sv.dim(2), w = sv.dim(3);
        const auto plane = h * w;
        const auto ss = sv.data(), us = t.value(u).data(), vs = t.value(v).data(), gs = g.data();
        double* ds = t.requires_grad(source) ? t.grad_buffer(source).data().data() : nullptr;
        double* du = t.requires_grad(u) ? t.grad_buffer(u).data().data() : nullptr;
        double* dv = t.requires_grad(v) ? t.grad_buffer(v).data().data() : nullptr;
        auto inside = [&](std::int64_t y, std::int64_t x) { return y >= 0 && y < h && x >= 0 && x < w; };
        for (std::int64_t s = 0; s < n; ++s) {
            for (std::int64_t i = 0; i < h; ++i) {
                for (std::int64_t j = 0; j < w; ++j) {
                    const auto fi = s * plane + i * w + j;
                    const Tap tp = tap_for(i, j, vs[static_cast<std::size_t>(fi)], us[static_cast<std::size_t>(fi)]);
                    const bool in00 = inside(tp.y0, tp.x0), in01 = inside(tp.y0, tp.x0 + 1);
                    const bool in10 = inside(tp.y0 + 1, tp.x0), in11 = inside(tp.y0 + 1, tp.x0 + 1);
                    double gu = 0.0, gv = 0.0;
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        const auto base = (s * c + ch) * plane;
                        const double go = gs[static_cast<std::size_t>(base + i * w + j)];
                        if (go == 0.0) continue;
                        const double* img = ss.data() + base;
                        const double v00 = in00 ? img[tp.y0 * w + tp.x0] : 0.0;
                        const double v01 = in01 ? img[tp.y0 * w + tp.x0 + 1] : 0.0;
                        const double v10 = in10 ? img[(tp.y0 + 1) * w + tp.x0] : 0.0;
                        const double v11 = in11 ? img[(tp.y0 + 1) * w + tp.x0 + 1] : 0.0;
                        if (ds) {
                            if (in00) ds[base + tp.y0 * w + tp.x0] += go * (1 - tp.fy) * (1 - tp.fx);
                            if (in01) ds[base + tp.y0 * w + tp.x0 + 1] += go * (1 - tp.fy) * tp.fx;
                            if (in10) ds[base + (tp.y0 + 1) * w + tp.x0] += go * tp.fy * (1 - tp.fx);
                            if (in11) ds[base + (tp.y0 + 1) * w + tp.x0 + 1] += go * tp.fy * tp.fx;
                        }
                        gu += go * ((1 - tp.fy) * (v01 - v00) + tp.fy * (v11 - v10));
                        gv += go * ((1 - tp.fx) * (v10 - v00) + tp.fx * (v11 - v01));
                    }
                    if (du) du[fi] += gu;
                    if (dv) dv[fi] += gv;
                }
            }
        }
    });
}

Var diff(Var a, Var b) { return sub(a, b); }

}  // namespace fdnet
