#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "fdnet/tape.hpp"

namespace fdnet {

using IntPair = std::array<int, 2>;

struct Conv2dOptions {
    IntPair stride{1, 1};
    IntPair padding{0, 0};
    IntPair dilation{1, 1};
};

struct ConvTranspose2dOptions {
    IntPair stride{1, 1};
    IntPair padding{0, 0};
    IntPair output_padding{0, 0};
};

/// Output extent of a convolution along one axis; throws ShapeError when < 1.
std::int64_t conv_output_size(std::int64_t in, int kernel, int stride, int pad, int dilation);
/// Output extent of a transposed convolution along one axis.
std::int64_t conv_transpose_output_size(std::int64_t in, int kernel, int stride, int pad, int output_pad);

/// Cross-correlation (no kernel flip) with zero padding.
/// x: [N,Cin,H,W], weight: [Cout,Cin,Kh,Kw], bias: [Cout].
Var conv2d(Var x, Var weight, std::optional<Var> bias, const Conv2dOptions& opt = {});

/// Fractionally strided convolution, the adjoint of conv2d w.r.t. its input.
/// x: [N,Cin,H,W], weight: [Cin,Cout,Kh,Kw], bias: [Cout].
Var conv_transpose2d(Var x, Var weight, std::optional<Var> bias, const ConvTranspose2dOptions& opt = {});

/// Per-sample normalization over (channels-in-group x H x W), then per-channel affine.
Var group_norm(Var x, int groups, Var gamma, Var beta, double eps = 1e-5);

/// GroupNorm group count used throughout the model: 8 when C >= 8, else 1.
int default_groups(std::int64_t channels);

enum class ActivationKind { kSigmoid, kTanh, kLeakyRelu };

Var sigmoid(Var x);
Var tanh(Var x);
Var leaky_relu(Var x, double slope = 0.01);
Var activation(Var x, ActivationKind kind, double slope = 0.01);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Hadamard product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);

/// x: [N,C,H,W] times w: [C,H,W] broadcast over the batch.
Var mul_batch_broadcast(Var x, Var w);

/// Concatenates [N,Ci,H,W] maps along the channel axis, preserving order.
Var concat_channels(std::span<const Var> parts);
Var concat_channels(std::initializer_list<Var> parts);
Var slice_channels(Var x, std::int64_t begin, std::int64_t count);

/// Sum of all elements as a rank-0 tensor.
Var sum(Var x);

/// Elementwise clamp; gradient passes only strictly inside (lo, hi).
Var clamp(Var x, double lo, double hi);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace fdnet
