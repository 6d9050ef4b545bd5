#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "fdnet/ops.hpp"

namespace fdnet {

/// Gate blocks are stacked along the output-channel axis of the kernels and
/// biases in the order g, i, f, o:
///   w_x  [4*hidden, in,     3, 3]   W_xg, W_xi, W_xf, W_xo
///   w_h  [4*hidden, hidden, 3, 3]   W_hg, W_hi, W_hf, W_ho
///   bias [4*hidden]                 b_g, b_i, b_f, b_o
/// Peepholes w_ci, w_cf, w_co are [hidden, H, W].
enum class Gate : int { kG = 0, kI = 1, kF = 2, kO = 3 };

struct ConvLstmParams {
    Tensor w_x, w_h, bias;
    Tensor w_ci, w_cf, w_co;
    int hidden = 0;
    int dilation = 1;
    bool peephole = true;
};

/// ConvLstmParams bound to a tape.
struct ConvLstmVars {
    Var w_x, w_h, bias;
    Var w_ci, w_cf, w_co;
    int hidden = 0;
    int dilation = 1;
    bool peephole = true;
};

/// Hidden and cell maps, both [N, hidden, H, W].
struct ConvLstmState {
    Var h;
    Var c;
};

/// Zero-initialized parameters of the right shapes.
ConvLstmParams make_convlstm_params(int in_channels, int hidden, std::int64_t height, std::int64_t width,
                                    int dilation = 1, bool peephole = true);

/// Xavier-normal kernels per gate block; biases and peepholes zero.
void xavier_init(ConvLstmParams& p, std::mt19937_64& rng);

ConvLstmVars bind(Tape& tape, const ConvLstmParams& p, bool trainable);

ConvLstmState init_state(Tape& tape, std::int64_t batch, int hidden, std::int64_t height, std::int64_t width);

/// One step of the peephole ConvLSTM recurrence:
///   g = tanh(W_xg*X + W_hg*H + b_g)
///   i = sigma(W_xi*X + W_hi*H + W_ci . C + b_i)
///   f = sigma(W_xf*X + W_hf*H + W_cf . C + b_f)
///   C' = f . C + i . g
///   o = sigma(W_xo*X + W_ho*H + W_co . C' + b_o)
///   H' = o . tanh(C')
/// Spatial size is preserved (padding = dilation for the 3x3 kernels).
ConvLstmState convlstm_step(const ConvLstmVars& p, Var x, const ConvLstmState& state);

}  // namespace fdnet
