#include "fdnet/convlstm.hpp"

#include <cmath>

#include "fdnet/errors.hpp"
#include "init.hpp"

namespace fdnet {

ConvLstmParams make_convlstm_params(int in_channels, int hidden, std::int64_t height, std::int64_t width,
                                    int dilation, bool peephole) {
    if (in_channels < 1 || hidden < 1 || height < 1 || width < 1 || dilation < 1)
        throw ConfigError("convlstm: channel counts, spatial size and dilation must be positive");
    ConvLstmParams p;
    p.hidden = hidden;
    p.dilation = dilation;
    p.peephole = peephole;
    p.w_x = Tensor::zeros({4LL * hidden, in_channels, 3, 3});
    p.w_h = Tensor::zeros({4LL * hidden, hidden, 3, 3});
    p.bias = Tensor::zeros({4LL * hidden});
    p.w_ci = Tensor::zeros({hidden, height, width});
    p.w_cf = Tensor::zeros({hidden, height, width});
    p.w_co = Tensor::zeros({hidden, height, width});
    return p;
}

void xavier_init(ConvLstmParams& p, std::mt19937_64& rng) {
    // Each gate kernel is its own [hidden, in, 3, 3] block.
    detail::xavier_normal_blocks(p.w_x, 4, rng);
    detail::xavier_normal_blocks(p.w_h, 4, rng);
}

ConvLstmVars bind(Tape& tape, const ConvLstmParams& p, bool trainable) {
    return ConvLstmVars{tape.leaf(p.w_x, trainable),  tape.leaf(p.w_h, trainable),  tape.leaf(p.bias, trainable),
                        tape.leaf(p.w_ci, trainable), tape.leaf(p.w_cf, trainable), tape.leaf(p.w_co, trainable),
                        p.hidden,                     p.dilation,                   p.peephole};
}

ConvLstmState init_state(Tape& tape, std::int64_t batch, int hidden, std::int64_t height, std::int64_t width) {
    if (batch < 1 || hidden < 1 || height < 1 || width < 1)
        throw ShapeError("init_state: dimensions must be positive");
    const Shape shape{batch, hidden, height, width};
    return ConvLstmState{tape.constant(Tensor::zeros(shape)), tape.constant(Tensor::zeros(shape))};
}

ConvLstmState convlstm_step(const ConvLstmVars& p, Var x, const ConvLstmState& state) {
    const auto& xs = x.shape();
    const auto& hs = state.h.shape();
    if (xs.size() != 4 || hs.size() != 4 || xs[0] != hs[0] || xs[2] != hs[2] || xs[3] != hs[3])
        throw ShapeError("convlstm_step: input " + shape_str(xs) + " does not match state " + shape_str(hs));
    if (state.c.shape() != hs) throw ShapeError("convlstm_step: H and C shapes differ");
    if (hs[1] != p.hidden) throw ShapeError("convlstm_step: state channels do not match hidden size");

    const Conv2dOptions conv{{1, 1}, {p.dilation, p.dilation}, {p.dilation, p.dilation}};
    const Var pre = add(conv2d(x, p.w_x, p.bias, conv), conv2d(state.h, p.w_h, std::nullopt, conv));
    const auto n = static_cast<std::int64_t>(p.hidden);
    auto gate_pre = [&](Gate gate) { return slice_channels(pre, static_cast<int>(gate) * n, n); };

    const Var g = tanh(gate_pre(Gate::kG));
    Var i_pre = gate_pre(Gate::kI);
    Var f_pre = gate_pre(Gate::kF);
    if (p.peephole) {
        i_pre = add(i_pre, mul_batch_broadcast(state.c, p.w_ci));
        f_pre = add(f_pre, mul_batch_broadcast(state.c, p.w_cf));
    }
    const Var i = sigmoid(i_pre);
    const Var f = sigmoid(f_pre);
    const Var c = add(mul(f, state.c), mul(i, g));
    Var o_pre = gate_pre(Gate::kO);
    if (p.peephole) o_pre = add(o_pre, mul_batch_broadcast(c, p.w_co));
    const Var o = sigmoid(o_pre);
    return ConvLstmState{mul(o, tanh(c)), c};
}

}  // namespace fdnet
