#include "fdnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "fdnet/errors.hpp"
#include "kernels.hpp"

namespace fdnet {

namespace {

Tape& same_tape(std::initializer_list<Var> vars) {
    Tape* tape = nullptr;
    for (const auto& v : vars) {
        if (!v.valid()) throw std::logic_error("unbound Var passed to op");
        if (tape && v.tape != tape) throw std::logic_error("op inputs recorded on different tapes");
        tape = v.tape;
    }
    return *tape;
}

void require_rank(const Tensor& t, std::int64_t rank, const char* op, const char* arg) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
}

Var finish(Tape& tape, Tensor out, std::initializer_list<Var> inputs, Tape::BackwardFn fn, const char* op) {
    require_finite(out, op);
    return tape.record(std::move(out), inputs, std::move(fn));
}

Var unary(Var x, const char* op, double (*f)(double, double), double (*df)(double, double, double),
          double param) {
    Tape& tape = same_tape({x});
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    auto o = out.data();
    auto in = xv.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i], param);
    // The result node is created after this call; it captures its own id lazily via
    // the output value stored on the tape.
    auto y_id = std::make_shared<int>(-1);
    Var y = finish(
        tape, std::move(out), {x},
        [x, y_id, df, param](Tape& t, const Tensor& g) {
            const auto xs = t.value(x).data();
            const auto ys = t.value(Var{&t, *y_id}).data();
            auto& gx = t.grad_buffer(x);
            auto dst = gx.data();
            auto gs = g.data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gs[i] * df(xs[i], ys[i], param);
        },
        op);
    *y_id = y.id;
    return y;
}

}  // namespace

std::int64_t conv_output_size(std::int64_t in, int kernel, int stride, int pad, int dilation) {
    if (stride < 1 || dilation < 1 || pad < 0 || kernel < 1)
        throw ShapeError("conv2d: stride/dilation/kernel must be positive and padding non-negative");
    const std::int64_t span = static_cast<std::int64_t>(dilation) * (kernel - 1) + 1;
    const std::int64_t num = in + 2 * pad - span;
    if (num < 0) throw ShapeError("conv2d: non-positive output extent");
    return num / stride + 1;
}

std::int64_t conv_transpose_output_size(std::int64_t in, int kernel, int stride, int pad, int output_pad) {
    if (stride < 1 || pad < 0 || kernel < 1)
        throw ShapeError("conv_transpose2d: stride/kernel must be positive and padding non-negative");
    if (output_pad < 0 || output_pad >= stride)
        throw ShapeError("conv_transpose2d: output_padding must satisfy 0 <= output_padding < stride");
    const std::int64_t out = (in - 1) * stride - 2 * pad + kernel + output_pad;
    if (out < 1) throw ShapeError("conv_transpose2d: non-positive output extent");
    return out;
}

Var conv2d(Var x, Var weight, std::optional<Var> bias, const Conv2dOptions& opt) {
    Tape& tape = bias ? same_tape({x, weight, *bias}) : same_tape({x, weight});
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    require_rank(xv, 4, "conv2d", "input");
    require_rank(wv, 4, "conv2d", "kernel");
    const auto n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const auto cout = wv.dim(0);
    if (wv.dim(1) != cin)
        throw ShapeError("conv2d: kernel expects " + std::to_string(wv.dim(1)) + " input channels, input has " +
                         std::to_string(cin));
    if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != cout))
        throw ShapeError("conv2d: bias must have shape [" + std::to_string(cout) + "]");

    detail::ConvGeometry g{n,
                           cin,
                           h,
                           w,
                           static_cast<int>(wv.dim(2)),
                           static_cast<int>(wv.dim(3)),
                           opt.stride[0],
                           opt.stride[1],
                           opt.padding[0],
                           opt.padding[1],
                           opt.dilation[0],
                           opt.dilation[1],
                           0,
                           0};
    g.out_h = conv_output_size(h, g.kh, g.sh, g.ph, g.dh);
    g.out_w = conv_output_size(w, g.kw, g.sw, g.pw, g.dw);
    const auto rows = g.col_rows(), cols = g.col_cols(), plane = g.out_h * g.out_w;

    detail::Scratch col(rows * cols);
    detail::im2col(xv.data().data(), g, col.data());
    detail::Scratch tmp(cout * cols);
    detail::gemm(false, false, cout, cols, rows, 1.0, wv.data().data(), col.data(), 0.0, tmp.data());
    Tensor out({n, cout, g.out_h, g.out_w});
    detail::cn_to_nchw(tmp.data(), n, cout, plane, out.data().data());
    if (bias) {
        const auto b = bias->value().data();
        auto o = out.data();
        for (std::int64_t s = 0; s < n; ++s)
            for (std::int64_t c = 0; c < cout; ++c) {
                double* p = o.data() + (s * cout + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) p[i] += b[static_cast<std::size_t>(c)];
            }
    }

    std::vector<Var> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    require_finite(out, "conv2d");
    return tape.record(std::move(out), inputs, [x, weight, bias, g](Tape& t, const Tensor& grad) {
        const auto rows = g.col_rows(), cols = g.col_cols(), plane = g.out_h * g.out_w;
        const auto cout = t.value(weight).dim(0);
        detail::Scratch gt(cout * cols);
        detail::nchw_to_cn(grad.data().data(), g.batch, cout, plane, gt.data());
        if (bias && t.requires_grad(*bias)) {
            auto db = t.grad_buffer(*bias).data();
            for (std::int64_t c = 0; c < cout; ++c) {
                double s = 0.0;
                const double* p = gt.data() + c * cols;
                for (std::int64_t i = 0; i < cols; ++i) s += p[i];
                db[static_cast<std::size_t>(c)] += s;
            }
        }
        const bool need_w = t.requires_grad(weight);
        const bool need_x = t.requires_grad(x);
        if (need_w) {
            detail::Scratch col(rows * cols);
            detail::im2col(t.value(x).data().data(), g, col.data());
            detail::gemm(false, true, cout, rows, cols, 1.0, gt.data(), col.data(), 1.0,
                         t.grad_buffer(weight).data().data());
        }
        if (need_x) {
            detail::Scratch dcol(rows * cols);
            detail::gemm(true, false, rows, cols, cout, 1.0, t.value(weight).data().data(), gt.data(), 0.0,
                         dcol.data());
            detail::col2im_add(dcol.data(), g, t.grad_buffer(x).data().data());
        }
    });
}

Var conv_transpose2d(Var x, Var weight, std::optional<Var> bias, const ConvTranspose2dOptions& opt) {
    Tape& tape = bias ? same_tape({x, weight, *bias}) : same_tape({x, weight});
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    require_rank(xv, 4, "conv_transpose2d", "input");
    require_rank(wv, 4, "conv_transpose2d", "kernel");
    const auto n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (wv.dim(0) != cin)
        throw ShapeError("conv_transpose2d: kernel expects " + std::to_string(wv.dim(0)) +
                         " input channels, input has " + std::to_string(cin));
    const auto cout = wv.dim(1);
    const int kh = static_cast<int>(wv.dim(2)), kw = static_cast<int>(wv.dim(3));
    if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != cout))
        throw ShapeError("conv_transpose2d: bias must have shape [" + std::to_string(cout) + "]");
    const auto oh = conv_transpose_output_size(h, kh, opt.stride[0], opt.padding[0], opt.output_padding[0]);
    const auto ow = conv_transpose_output_size(w, kw, opt.stride[1], opt.padding[1], opt.output_padding[1]);

    // The output image is the "input" side of a forward convolution whose
    // output grid is the transposed conv's input.
    detail::ConvGeometry g{n, cout, oh, ow, kh, kw, opt.stride[0], opt.stride[1], opt.padding[0], opt.padding[1],
                           1, 1, h, w};
    const auto rows = g.col_rows(), cols = g.col_cols(), plane = h * w;
    detail::Scratch xr(cin * cols);
    detail::nchw_to_cn(xv.data().data(), n, cin, plane, xr.data());
    detail::Scratch col(rows * cols);
    detail::gemm(true, false, rows, cols, cin, 1.0, wv.data().data(), xr.data(), 0.0, col.data());
    Tensor out({n, cout, oh, ow});
    detail::col2im_add(col.data(), g, out.data().data());
    if (bias) {
        const auto b = bias->value().data();
        auto o = out.data();
        const auto oplane = oh * ow;
        for (std::int64_t s = 0; s < n; ++s)
            for (std::int64_t c = 0; c < cout; ++c) {
                double* p = o.data() + (s * cout + c) * oplane;
                for (std::int64_t i = 0; i < oplane; ++i) p[i] += b[static_cast<std::size_t>(c)];
            }
    }

    std::vector<Var> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    require_finite(out, "conv_transpose2d");
    return tape.record(std::move(out), inputs, [x, weight, bias, g, cin](Tape& t, const Tensor& grad) {
        const auto rows = g.col_rows(), cols = g.col_cols(), plane = g.out_h * g.out_w;
        const auto cout = g.channels;
        if (bias && t.requires_grad(*bias)) {
            auto db = t.grad_buffer(*bias).data();
            const auto oplane = g.height * g.width;
            const auto gs = grad.data();
            for (std::int64_t s = 0; s < g.batch; ++s)
                for (std::int64_t c = 0; c < cout; ++c) {
                    const double* p = gs.data() + (s * cout + c) * oplane;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < oplane; ++i) acc += p[i];
                    db[static_cast<std::size_t>(c)] += acc;
                }
        }
        const bool need_w = t.requires_grad(weight);
        const bool need_x = t.requires_grad(x);
        if (!need_w && !need_x) return;
        detail::Scratch gcol(rows * cols);
        detail::im2col(grad.data().data(), g, gcol.data());
        if (need_x) {
            detail::Scratch dxr(cin * cols);
            detail::gemm(false, false, cin, cols, rows, 1.0, t.value(weight).data().data(), gcol.data(), 0.0,
                         dxr.data());
            detail::Scratch dx(cin * cols);
            detail::cn_to_nchw(dxr.data(), g.batch, cin, plane, dx.data());
            auto dst = t.grad_buffer(x).data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += dx[i];
        }
        if (need_w) {
            detail::Scratch xr(cin * cols);
            detail::nchw_to_cn(t.value(x).data().data(), g.batch, cin, plane, xr.data());
            detail::gemm(false, true, cin, rows, cols, 1.0, xr.data(), gcol.data(), 1.0,
                         t.grad_buffer(weight).data().data());
        }
    });
}

int default_groups(std::int64_t channels) { return channels >= 8 ? 8 : 1; }

Var group_norm(Var x, int groups, Var gamma, Var beta, double eps) {
    Tape& tape = same_tape({x, gamma, beta});
    const Tensor& xv = x.value();
    require_rank(xv, 4, "group_norm", "input");
    const auto n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (groups < 1 || c % groups != 0)
        throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible by " +
                         std::to_string(groups) + " groups");
    if (!(eps > 0.0)) throw ShapeError("group_norm: eps must be positive");
    if (gamma.value().shape() != Shape{c} || beta.value().shape() != Shape{c})
        throw ShapeError("group_norm: gamma/beta must have shape [" + std::to_string(c) + "]");

    const auto plane = h * w;
    const auto per_group = (c / groups) * plane;
    auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(xv.numel()));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n * groups));
    Tensor out(xv.shape());
    const auto xs = xv.data();
    const auto gs = gamma.value().data();
    const auto bs = beta.value().data();
    auto o = out.data();
    for (std::int64_t s = 0; s < n; ++s) {
        for (int gi = 0; gi < groups; ++gi) {
            const auto base = (s * c + gi * (c / groups)) * plane;
            double mean = 0.0;
            for (std::int64_t i = 0; i < per_group; ++i) mean += xs[static_cast<std::size_t>(base + i)];
            mean /= static_cast<double>(per_group);
            double var = 0.0;
            for (std::int64_t i = 0; i < per_group; ++i) {
                const double d = xs[static_cast<std::size_t>(base + i)] - mean;
                var += d * d;
            }
            var /= static_cast<double>(per_group);
            const double inv = 1.0 / std::sqrt(var + eps);
            (*inv_std)[static_cast<std::size_t>(s * groups + gi)] = inv;
            for (std::int64_t i = 0; i < per_group; ++i) {
                const auto idx = static_cast<std::size_t>(base + i);
                const auto ch = static_cast<std::size_t>(gi * (c / groups) + i / plane);
                const double xh = (xs[idx] - mean) * inv;
                (*xhat)[idx] = xh;
                o[idx] = gs[ch] * xh + bs[ch];
            }
        }
    }
    return finish(
        tape, std::move(out), {x, gamma, beta},
        [x, gamma, beta, xhat, inv_std, groups, n, c, plane, per_group](Tape& t, const Tensor& grad) {
            const auto gd = grad.data();
            const auto gam = t.value(gamma).data();
            if (t.requires_grad(gamma) || t.requires_grad(beta)) {
                std::vector<double> dg(static_cast<std::size_t>(c), 0.0), db(static_cast<std::size_t>(c), 0.0);
                for (std::int64_t s = 0; s < n; ++s)
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        const auto base = (s * c + ch) * plane;
                        for (std::int64_t i = 0; i < plane; ++i) {
                            const auto idx = static_cast<std::size_t>(base + i);
                            dg[static_cast<std::size_t>(ch)] += gd[idx] * (*xhat)[idx];
                            db[static_cast<std::size_t>(ch)] += gd[idx];
                        }
                    }
                if (t.requires_grad(gamma)) {
                    auto dst = t.grad_buffer(gamma).data();
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += dg[i];
                }
                if (t.requires_grad(beta)) {
                    auto dst = t.grad_buffer(beta).data();
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += db[i];
                }
            }
            if (!t.requires_grad(x)) return;
            auto dx = t.grad_buffer(x).data();
            const double m = static_cast<double>(per_group);
            for (std::int64_t s = 0; s < n; ++s) {
                for (int gi = 0; gi < groups; ++gi) {
                    const auto base = (s * c + gi * (c / groups)) * plane;
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::int64_t i = 0; i < per_group; ++i) {
                        const auto idx = static_cast<std::size_t>(base + i);
                        const double d = gd[idx] * gam[static_cast<std::size_t>(gi * (c / groups) + i / plane)];
                        sum_d += d;
                        sum_dx += d * (*xhat)[idx];
                    }
                    const double inv = (*inv_std)[static_cast<std::size_t>(s * groups + gi)];
                    for (std::int64_t i = 0; i < per_group; ++i) {
                        const auto idx = static_cast<std::size_t>(base + i);
                        const double d = gd[idx] * gam[static_cast<std::size_t>(gi * (c / groups) + i / plane)];
                        dx[idx] += inv / m * (m * d - sum_d - (*xhat)[idx] * sum_dx);
                    }
                }
            }
        },
        "group_norm");
}

Var sigmoid(Var x) {
    return unary(
        x, "sigmoid", [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y, double) { return y * (1.0 - y); }, 0.0);
}

Var tanh(Var x) {
    return unary(
        x, "tanh", [](double v, double) { return std::tanh(v); }, [](double, double y, double) { return 1.0 - y * y; },
        0.0);
}

Var leaky_relu(Var x, double slope) {
    return unary(
        x, "leaky_relu", [](double v, double s) { return v > 0.0 ? v : s * v; },
        [](double v, double, double s) { return v > 0.0 ? 1.0 : s; }, slope);
}

Var activation(Var x, ActivationKind kind, double slope) {
    switch (kind) {
        case ActivationKind::kSigmoid: return sigmoid(x);
        case ActivationKind::kTanh: return tanh(x);
        case ActivationKind::kLeakyRelu: return leaky_relu(x, slope);
    }
    throw std::logic_error("unknown activation");
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Var add(Var a, Var b) {
    Tape& tape = same_tape({a, b});
    require_same_shape(a.value(), b.value(), "add");
    Tensor out(a.shape());
    auto o = out.data();
    const auto av = a.value().data(), bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
    return finish(
        tape, std::move(out), {a, b},
        [a, b](Tape& t, const Tensor& g) {
            t.accumulate(a, g);
            t.accumulate(b, g);
        },
        "add");
}

Var sub(Var a, Var b) {
    Tape& tape = same_tape({a, b});
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out(a.shape());
    auto o = out.data();
    const auto av = a.value().data(), bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] - bv[i];
    return finish(
        tape, std::move(out), {a, b},
        [a, b](Tape& t, const Tensor& g) {
            t.accumulate(a, g);
            if (t.requires_grad(b)) {
                auto dst = t.grad_buffer(b).data();
                const auto gs = g.data();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= gs[i];
            }
        },
        "sub");
}

Var mul(Var a, Var b) {
    Tape& tape = same_tape({a, b});
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out(a.shape());
    auto o = out.data();
    const auto av = a.value().data(), bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
    return finish(
        tape, std::move(out), {a, b},
        [a, b](Tape& t, const Tensor& g) {
            const auto gs = g.data();
            if (t.requires_grad(a)) {
                auto dst = t.grad_buffer(a).data();
                const auto bv = t.value(b).data();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gs[i] * bv[i];
            }
            if (t.requires_grad(b)) {
                auto dst = t.grad_buffer(b).data();
                const auto av = t.value(a).data();
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gs[i] * av[i];
            }
        },
        "mul");
}

Var scale(Var a, double factor) {
    Tape& tape = same_tape({a});
    Tensor out(a.shape());
    auto o = out.data();
    const auto av = a.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * factor;
    return finish(
        tape, std::move(out), {a},
        [a, factor](Tape& t, const Tensor& g) {
            auto dst = t.grad_buffer(a).data();
            const auto gs = g.data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gs[i] * factor;
        },
        "scale");
}

Var mul_batch_broadcast(Var x, Var w) {
    Tape& tape = same_tape({x, w});
    const Tensor& xv = x.value();
    require_rank(xv, 4, "mul_batch_broadcast", "input");
    const Shape expect{xv.dim(1), xv.dim(2), xv.dim(3)};
    if (w.value().shape() != expect)
        throw ShapeError("mul_batch_broadcast: weight shape " + shape_str(w.value().shape()) + " expected " +
                         shape_str(expect));
    const auto block = shape_numel(expect);
    const auto n = xv.dim(0);
    Tensor out(xv.shape());
    auto o = out.data();
    const auto xs = xv.data(), ws = w.value().data();
    for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t i = 0; i < block; ++i)
            o[static_cast<std::size_t>(s * block + i)] = xs[static_cast<std::size_t>(s * block + i)] * ws[static_cast<std::size_t>(i)];
    return finish(
        tape, std::move(out), {x, w},
        [x, w, n, block](Tape& t, const Tensor& g) {
            const auto gs = g.data();
            if (t.requires_grad(x)) {
                auto dst = t.grad_buffer(x).data();
                const auto ws = t.value(w).data();
                for (std::int64_t s = 0; s < n; ++s)
                    for (std::int64_t i = 0; i < block; ++i)
                        dst[static_cast<std::size_t>(s * block + i)] += gs[static_cast<std::size_t>(s * block + i)] * ws[static_cast<std::size_t>(i)];
            }
            if (t.requires_grad(w)) {
                auto dst = t.grad_buffer(w).data();
                const auto xs = t.value(x).data();
                for (std::int64_t s = 0; s < n; ++s)
                    for (std::int64_t i = 0; i < block; ++i)
                        dst[static_cast<std::size_t>(i)] += gs[static_cast<std::size_t>(s * block + i)] * xs[static_cast<std::size_t>(s * block + i)];
            }
        },
        "mul_batch_broadcast");
}

Var concat_channels(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    Tape* tape = parts[0].tape;
    const Tensor& first = parts[0].value();
    require_rank(first, 4, "concat_channels", "input");
    const auto n = first.dim(0), h = first.dim(2), w = first.dim(3);
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p.tape != tape) throw std::logic_error("concat_channels: inputs on different tapes");
        const auto& v = p.value();
        if (v.rank() != 4 || v.dim(0) != n || v.dim(2) != h || v.dim(3) != w)
            throw ShapeError("concat_channels: mismatched N/H/W " + shape_str(v.shape()) + " vs " +
                             shape_str(first.shape()));
        total += v.dim(1);
    }
    const auto plane = h * w;
    Tensor out({n, total, h, w});
    auto o = out.data();
    std::int64_t offset = 0;
    std::vector<std::int64_t> offsets;
    for (const auto& p : parts) {
        const auto& v = p.value();
        const auto c = v.dim(1);
        const auto src = v.data();
        for (std::int64_t s = 0; s < n; ++s)
            std::copy_n(src.begin() + s * c * plane, c * plane, o.begin() + (s * total + offset) * plane);
        offsets.push_back(offset);
        offset += c;
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    require_finite(out, "concat_channels");
    return tape->record(std::move(out), inputs, [inputs, offsets, n, total, plane](Tape& t, const Tensor& g) {
        const auto gs = g.data();
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (!t.requires_grad(inputs[k])) continue;
            auto dst = t.grad_buffer(inputs[k]).data();
            const auto c = t.value(inputs[k]).dim(1);
            for (std::int64_t s = 0; s < n; ++s)
                for (std::int64_t i = 0; i < c * plane; ++i)
                    dst[static_cast<std::size_t>(s * c * plane + i)] +=
                        gs[static_cast<std::size_t>((s * total + offsets[k]) * plane + i)];
        }
    });
}

Var concat_channels(std::initializer_list<Var> parts) {
    return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice_channels(Var x, std::int64_t begin, std::int64_t count) {
    Tape& tape = same_tape({x});
    const Tensor& xv = x.value();
    require_rank(xv, 4, "slice_channels", "input");
    const auto n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    if (begin < 0 || count < 1 || begin + count > c)
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") out of " + std::to_string(c) + " channels");
    Tensor out({n, count, xv.dim(2), xv.dim(3)});
    auto o = out.data();
    const auto xs = xv.data();
    for (std::int64_t s = 0; s < n; ++s)
        std::copy_n(xs.begin() + (s * c + begin) * plane, count * plane, o.begin() + s * count * plane);
    return finish(
        tape, std::move(out), {x},
        [x, n, c, begin, count, plane](Tape& t, const Tensor& g) {
            auto dst = t.grad_buffer(x).data();
            const auto gs = g.data();
            for (std::int64_t s = 0; s < n; ++s)
                for (std::int64_t i = 0; i < count * plane; ++i)
                    dst[static_cast<std::size_t>((s * c + begin) * plane + i)] +=
                        gs[static_cast<std::size_t>(s * count * plane + i)];
        },
        "slice_channels");
}

Var sum(Var x) {
    Tape& tape = same_tape({x});
    return finish(
        tape, Tensor::scalar(x.value().sum()), {x},
        [x](Tape& t, const Tensor& g) {
            const double gv = g.item();
            auto dst = t.grad_buffer(x).data();
            for (auto& d : dst) d += gv;
        },
        "sum");
}

Var clamp(Var x, double lo, double hi) {
    Tape& tape = same_tape({x});
    Tensor out(x.shape());
    auto o = out.data();
    const auto xs = x.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(xs[i], lo, hi);
    return finish(
        tape, std::move(out), {x},
        [x, lo, hi](Tape& t, const Tensor& g) {
            auto dst = t.grad_buffer(x).data();
            const auto xs = t.value(x).data();
            const auto gs = g.data();
            for (std::size_t i = 0; i < dst.size(); ++i)
                if (xs[i] > lo && xs[i] < hi) dst[i] += gs[i];
        },
        "clamp");
}

}  // namespace fdnet
